use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid setting: {0}")]
    InvalidSetting(String),

    #[error("duplicate message label {label:?} at node {node}")]
    DuplicateLabel { node: String, label: String },

    #[error("internal node {node} has no outgoing edges")]
    EmptyNode { node: String },

    #[error("speaker {speaker} at node {node} is out of range for {players} players")]
    SpeakerOutOfRange {
        node: String,
        speaker: usize,
        players: usize,
    },

    #[error("invalid allocation at node {node}: {reason}")]
    InvalidAllocation { node: String, reason: String },

    #[error("payment vector at node {node} has {found} entries, expected {expected}")]
    PaymentArity {
        node: String,
        found: usize,
        expected: usize,
    },

    #[error("structure is not a tree: {0}")]
    NotATree(String),

    #[error("node {0} does not exist")]
    UnknownNode(NodeId),

    #[error("node {node} is not owned by player {player}")]
    NodeNotOwned { node: NodeId, player: usize },

    #[error("behavior of player {player} has no valid message at node {node}")]
    MissingChoice { node: NodeId, player: usize },

    #[error("behavior is invalid: {0}")]
    InvalidBehavior(String),

    #[error("strategy of player {player} is undefined for valuation {valuation}")]
    StrategyUndefined { player: usize, valuation: String },

    #[error("bundle kind does not match valuation kind")]
    BundleMismatch,

    #[error("invalid valuation: {0}")]
    InvalidValuation(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

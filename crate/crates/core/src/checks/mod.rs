//! Property checkers: IR, NNT, OSP, DSIC, welfare ratios and the proof scans.
//!
//! Every failing verdict carries a witness built from concrete behavior
//! profiles, so it can be re-checked with [`Witness::replay`].

mod incentives;
mod scans;
mod welfare;

pub use incentives::{check_dsic, check_ir, check_nnt, check_osp};
pub use scans::{
    audit_payment_bounds, first_divergence, scan_bad_leaf_good_leaf, BadLeafGoodLeaf, BoundCheck,
    Divergence, PaymentBoundAudit,
};
pub use welfare::{opt_welfare, welfare_ratio, Ratio, RatioReport, WelfareOracle};

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{run, Behavior, MechanismTree, NodeId};
use crate::rational::Rational;
use crate::strategy::{resolve, StrategyTable};
use crate::valuation::{bundle_index, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Ir,
    Nnt,
    Osp,
    Dsic,
}

impl Property {
    pub const ALL: [Property; 4] = [Property::Osp, Property::Dsic, Property::Ir, Property::Nnt];

    pub fn name(&self) -> &'static str {
        match self {
            Property::Ir => "ir",
            Property::Nnt => "nnt",
            Property::Osp => "osp",
            Property::Dsic => "dsic",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Property {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown check {s:?}")))
    }
}

/// A concrete violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Witness {
    /// Negative realized utility.
    Ir {
        player: usize,
        profile: Vec<String>,
        behaviors: Vec<Behavior>,
        leaf: NodeId,
        utility: Rational,
    },
    /// Negative realized payment.
    Nnt {
        player: usize,
        profile: Vec<String>,
        behaviors: Vec<Behavior>,
        leaf: NodeId,
        payment: Rational,
    },
    /// A vertex where the worst outcome of following is below the best outcome of deviating.
    Osp {
        player: usize,
        valuation: String,
        vertex: NodeId,
        follow: Vec<Behavior>,
        deviate: Vec<Behavior>,
        follow_leaf: NodeId,
        deviate_leaf: NodeId,
        worst_follow: Rational,
        best_deviate: Rational,
    },
    /// Opponent behaviors against which a deviation pays strictly more.
    Dsic {
        player: usize,
        valuation: String,
        follow: Vec<Behavior>,
        deviate: Vec<Behavior>,
        follow_leaf: NodeId,
        deviate_leaf: NodeId,
        follow_utility: Rational,
        deviate_utility: Rational,
    },
}

impl Witness {
    pub fn player(&self) -> usize {
        match self {
            Witness::Ir { player, .. }
            | Witness::Nnt { player, .. }
            | Witness::Osp { player, .. }
            | Witness::Dsic { player, .. } => *player,
        }
    }

    /// Re-runs the recorded profiles and confirms the violation from scratch.
    pub fn replay(&self, tree: &MechanismTree, domain: &Domain) -> Result<bool> {
        let utility = |player: usize, label: &str, leaf: NodeId| -> Result<Rational> {
            let j = domain.find(player, label).ok_or_else(|| {
                Error::InvalidParameter(format!("player {player} has no valuation {label:?}"))
            })?;
            leaf_utility(tree, domain, player, j, leaf)
        };
        match self {
            Witness::Ir {
                player,
                profile,
                behaviors,
                leaf,
                utility: u,
            } => {
                let play = run(tree, behaviors)?;
                let real = utility(*player, &profile[*player], play.leaf)?;
                Ok(play.leaf == *leaf && real == *u && real.is_negative())
            }
            Witness::Nnt {
                player,
                behaviors,
                leaf,
                payment,
                ..
            } => {
                let play = run(tree, behaviors)?;
                let (_, payments) = tree.leaf_outcome(play.leaf).expect("leaf");
                Ok(play.leaf == *leaf && payments[*player] == *payment && payment.is_negative())
            }
            Witness::Osp {
                player,
                valuation,
                vertex,
                follow,
                deviate,
                follow_leaf,
                deviate_leaf,
                worst_follow,
                best_deviate,
            } => {
                let a = run(tree, follow)?;
                let b = run(tree, deviate)?;
                let ua = utility(*player, valuation, a.leaf)?;
                let ub = utility(*player, valuation, b.leaf)?;
                let splits_at_vertex = a.path.contains(vertex)
                    && b.path.contains(vertex)
                    && tree.edge_towards(*vertex, a.leaf) != tree.edge_towards(*vertex, b.leaf);
                Ok(a.leaf == *follow_leaf
                    && b.leaf == *deviate_leaf
                    && splits_at_vertex
                    && ua == *worst_follow
                    && ub == *best_deviate
                    && ua < ub)
            }
            Witness::Dsic {
                player,
                valuation,
                follow,
                deviate,
                follow_leaf,
                deviate_leaf,
                follow_utility,
                deviate_utility,
            } => {
                let others_agree = follow
                    .iter()
                    .zip(deviate)
                    .enumerate()
                    .all(|(i, (x, y))| i == *player || x == y);
                let a = run(tree, follow)?;
                let b = run(tree, deviate)?;
                let ua = utility(*player, valuation, a.leaf)?;
                let ub = utility(*player, valuation, b.leaf)?;
                Ok(others_agree
                    && a.leaf == *follow_leaf
                    && b.leaf == *deviate_leaf
                    && ua == *follow_utility
                    && ub == *deviate_utility
                    && ua < ub)
            }
        }
    }
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub pass: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn pass(property: Property) -> Self {
        Verdict {
            property,
            pass: true,
            witness: None,
        }
    }

    fn fail(property: Property, witness: Witness) -> Self {
        Verdict {
            property,
            pass: false,
            witness: Some(witness),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{:<5}{status}", self.property.name().to_uppercase())?;
        if let Some(w) = &self.witness {
            match w {
                Witness::Ir {
                    player,
                    profile,
                    leaf,
                    utility,
                    ..
                } => write!(
                    f,
                    "  player {player} at profile ({}) reaches leaf #{leaf} with utility {utility:?}",
                    profile.join(", ")
                )?,
                Witness::Nnt {
                    player,
                    profile,
                    leaf,
                    payment,
                    ..
                } => write!(
                    f,
                    "  player {player} at profile ({}) reaches leaf #{leaf} and is paid {:?}",
                    profile.join(", "),
                    -*payment
                )?,
                Witness::Osp {
                    player,
                    valuation,
                    vertex,
                    worst_follow,
                    best_deviate,
                    ..
                } => write!(
                    f,
                    "  player {player} with {valuation} at vertex #{vertex}: worst follow {worst_follow:?} < best deviation {best_deviate:?}"
                )?,
                Witness::Dsic {
                    player,
                    valuation,
                    follow_utility,
                    deviate_utility,
                    ..
                } => write!(
                    f,
                    "  player {player} with {valuation}: following yields {follow_utility:?}, deviating yields {deviate_utility:?}"
                )?,
            }
        }
        Ok(())
    }
}

/// Utility of player `i` with her `j`-th valuation at a leaf.
pub fn leaf_utility(
    tree: &MechanismTree,
    domain: &Domain,
    i: usize,
    j: usize,
    leaf: NodeId,
) -> Result<Rational> {
    let (allocation, payments) = tree
        .leaf_outcome(leaf)
        .ok_or_else(|| Error::InvalidParameter(format!("node {leaf} is not a leaf")))?;
    Ok(domain.valuation(i, j).evaluate(allocation.bundle(i))? - payments[i])
}

/// Shared precomputation: resolved strategies and per-leaf utilities.
pub(crate) struct Context<'a> {
    pub tree: &'a MechanismTree,
    pub domain: &'a Domain,
    pub behaviors: Vec<Vec<&'a Behavior>>,
    /// `utils[i][j][node]`: utility at leaves, zero at internal nodes.
    pub utils: Vec<Vec<Vec<Rational>>>,
}

impl<'a> Context<'a> {
    pub fn new(
        tree: &'a MechanismTree,
        strategies: &'a [StrategyTable],
        domain: &'a Domain,
    ) -> Result<Self> {
        if tree.setting() != domain.setting() {
            return Err(Error::InvalidParameter(
                "mechanism and domain use different settings".into(),
            ));
        }
        let behaviors = resolve(strategies, domain)?;
        let tables = domain.value_tables();
        let utils = tables
            .iter()
            .enumerate()
            .map(|(i, per_val)| {
                per_val
                    .iter()
                    .map(|table| {
                        (0..tree.len())
                            .map(|node| match tree.leaf_outcome(node) {
                                Some((alloc, pay)) => table[bundle_index(alloc.bundle(i))] - pay[i],
                                None => Rational::ZERO,
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Context {
            tree,
            domain,
            behaviors,
            utils,
        })
    }

    pub fn profile_behaviors(&self, profile: &[usize]) -> Vec<Behavior> {
        profile
            .iter()
            .enumerate()
            .map(|(i, &j)| self.behaviors[i][j].clone())
            .collect()
    }

    pub fn labels(&self, profile: &[usize]) -> Vec<String> {
        profile
            .iter()
            .enumerate()
            .map(|(i, &j)| self.domain.label(i, j).to_string())
            .collect()
    }

    /// Leaf reached by a profile of valuation indices, with its path.
    pub fn play(&self, profile: &[usize]) -> crate::model::Play {
        self.tree
            .run_with(|node, speaker| self.behaviors[speaker][profile[speaker]].choice(node))
            .expect("resolved behaviors are total")
    }

    /// Behaviors for all players other than `player` that steer to every given leaf.
    pub fn opponents_routed(&self, player: usize, leaves: &[NodeId]) -> Vec<Behavior> {
        (0..self.domain.n())
            .map(|i| {
                let mut b = Behavior::first_message(self.tree, i);
                if i != player {
                    for &leaf in leaves {
                        b = b.routed_to(self.tree, leaf);
                    }
                }
                b
            })
            .collect()
    }
}

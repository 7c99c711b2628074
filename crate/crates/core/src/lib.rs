//! Verification toolkit for deterministic sequential auction mechanisms.
//!
//! Mechanisms are protocol trees ([`MechanismTree`]) paired with strategies
//! ([`StrategyTable`]) over finite valuation domains ([`Domain`]). The
//! [`checks`] module decides incentive properties with replayable witnesses,
//! [`mechanisms`] builds the reference auctions, [`structure`] inspects
//! ascending-auction structure and [`search`] enumerates normalized
//! mechanisms to look for counterexamples to impossibility results.

pub mod checks;
pub mod error;
pub mod format;
pub mod mechanisms;
pub mod model;
pub mod rational;
pub mod search;
pub mod strategy;
pub mod structure;
pub mod valuation;

pub use error::{Error, Result};
pub use model::{
    attainable, build_tree, run, Allocation, AuctionSetting, Behavior, Bundle, MechanismTree,
    NodeId, Play, SettingKind, TreeSpec,
};
pub use rational::Rational;
pub use strategy::{realize, OutcomeTable, StrategyTable};
pub use valuation::{
    adversarial_domain, make_valuation, restricted_additive_domain, AdversarialFamily, Domain,
    LabeledValuation, Valuation,
};

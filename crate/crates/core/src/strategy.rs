//! Strategies (valuation to behavior maps) and realized outcome tables.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{run, Allocation, Behavior, MechanismTree, NodeId};
use crate::rational::Rational;
use crate::valuation::Domain;

/// Maps valuation labels of one player to behaviors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyTable {
    player: usize,
    behaviors: BTreeMap<String, Behavior>,
}

impl StrategyTable {
    pub fn new(player: usize) -> Self {
        StrategyTable {
            player,
            behaviors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, label: impl Into<String>, behavior: Behavior) -> Result<()> {
        if behavior.owner() != self.player {
            return Err(Error::InvalidBehavior(format!(
                "behavior of player {} in the strategy of player {}",
                behavior.owner(),
                self.player
            )));
        }
        self.behaviors.insert(label.into(), behavior);
        Ok(())
    }

    pub fn with(mut self, label: impl Into<String>, behavior: Behavior) -> Result<Self> {
        self.insert(label, behavior)?;
        Ok(self)
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn get(&self, label: &str) -> Option<&Behavior> {
        self.behaviors.get(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Behavior)> {
        self.behaviors.iter()
    }

    pub fn len(&self) -> usize {
        self.behaviors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.behaviors.is_empty()
    }

    /// Builds a table by applying `rule` to every valuation of `player` in `domain`.
    pub fn from_domain<F>(domain: &Domain, player: usize, mut rule: F) -> Result<Self>
    where
        F: FnMut(usize) -> Result<Behavior>,
    {
        let mut table = StrategyTable::new(player);
        for j in 0..domain.player(player).len() {
            table.insert(domain.label(player, j), rule(j)?)?;
        }
        Ok(table)
    }
}

/// Behaviors aligned with domain indices: `resolved[i][j]` is player i's
/// behavior for her j-th valuation.
pub fn resolve<'s>(
    strategies: &'s [StrategyTable],
    domain: &Domain,
) -> Result<Vec<Vec<&'s Behavior>>> {
    if strategies.len() != domain.n() {
        return Err(Error::InvalidParameter(format!(
            "{} strategy tables for {} players",
            strategies.len(),
            domain.n()
        )));
    }
    strategies
        .iter()
        .enumerate()
        .map(|(i, table)| {
            if table.player() != i {
                return Err(Error::InvalidParameter(format!(
                    "strategy table {i} belongs to player {}",
                    table.player()
                )));
            }
            domain
                .player(i)
                .iter()
                .map(|lv| {
                    table
                        .get(&lv.label)
                        .ok_or_else(|| Error::StrategyUndefined {
                            player: i,
                            valuation: lv.label.clone(),
                        })
                })
                .collect()
        })
        .collect()
}

/// Realized allocation and payments for one profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutcomeEntry {
    /// Valuation index per player.
    pub profile: Vec<usize>,
    pub leaf: NodeId,
    pub allocation: Allocation,
    pub payments: Vec<Rational>,
}

/// The social choice function realized on a finite domain, in profile order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutcomeTable {
    sizes: Vec<usize>,
    entries: Vec<OutcomeEntry>,
}

impl OutcomeTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[OutcomeEntry] {
        &self.entries
    }

    pub fn get(&self, profile: &[usize]) -> Option<&OutcomeEntry> {
        if profile.len() != self.sizes.len() {
            return None;
        }
        let mut idx = 0;
        for (&p, &s) in profile.iter().zip(&self.sizes) {
            if p >= s {
                return None;
            }
            idx = idx * s + p;
        }
        self.entries.get(idx)
    }
}

/// Runs the tree on every profile of the domain.
pub fn realize(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<OutcomeTable> {
    let resolved = resolve(strategies, domain)?;
    let mut entries = Vec::with_capacity(domain.profile_count());
    for profile in domain.profiles() {
        let behaviors: Vec<Behavior> = profile
            .iter()
            .enumerate()
            .map(|(i, &j)| resolved[i][j].clone())
            .collect();
        let play = run(tree, &behaviors)?;
        let (allocation, payments) = tree
            .leaf_outcome(play.leaf)
            .expect("run always ends at a leaf");
        entries.push(OutcomeEntry {
            profile,
            leaf: play.leaf,
            allocation: allocation.clone(),
            payments: payments.to_vec(),
        });
    }
    Ok(OutcomeTable {
        sizes: domain.sizes(),
        entries,
    })
}

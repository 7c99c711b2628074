//! Structural analyzers for ascending-style protocols: minimal prices,
//! decisive bundles and continue-or-quit vertices.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Bundle, MechanismTree, NodeId, NodeKind};
use crate::rational::Rational;

/// Lowest payment of `player` over the leaves below `node` that give her a
/// superset of `bundle`; `None` when no such leaf exists.
pub fn minimal_price(
    tree: &MechanismTree,
    node: NodeId,
    player: usize,
    bundle: &Bundle,
) -> Result<Option<Rational>> {
    tree.get(node)?;
    Ok(tree
        .subtree_leaves(node)
        .filter_map(|leaf| {
            let (alloc, pay) = tree.leaf_outcome(leaf)?;
            alloc
                .0
                .get(player)
                .filter(|b| b.contains(bundle))
                .map(|_| pay[player])
        })
        .min())
}

/// Whether `player` can force, from `node`, a leaf where she receives a
/// superset of `bundle` and pays at most `price`, whatever the others do
/// below `node`.
pub fn is_decisive(
    tree: &MechanismTree,
    node: NodeId,
    player: usize,
    bundle: &Bundle,
    price: Rational,
) -> Result<bool> {
    tree.get(node)?;
    // children carry larger ids, so a reverse scan of the subtree is bottom-up
    let range = tree.subtree_range(node);
    let mut forced = vec![false; range.len()];
    for id in range.clone().rev() {
        let local = id - range.start;
        forced[local] = match &tree.node(id).kind {
            NodeKind::Leaf {
                allocation,
                payments,
            } => allocation
                .0
                .get(player)
                .is_some_and(|b| b.contains(bundle) && payments[player] <= price),
            NodeKind::Internal { speaker, edges } => {
                let mut children = edges.iter().map(|e| forced[e.child - range.start]);
                if *speaker == player {
                    children.any(|x| x)
                } else {
                    children.all(|x| x)
                }
            }
        };
    }
    Ok(forced[0])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VertexClassification {
    pub vertex: NodeId,
    pub speaker: usize,
    /// Messages whose subtree holds a leaf giving the speaker a nonempty bundle.
    pub winning_messages: usize,
    pub continue_or_quit: bool,
    /// The unique winning message, when there is exactly one.
    pub continue_message: Option<String>,
}

/// Classifies an internal vertex by how many of its messages can still lead
/// the speaker to a nonempty bundle.
pub fn classify_continue_or_quit(
    tree: &MechanismTree,
    node: NodeId,
) -> Result<VertexClassification> {
    let n = tree.get(node)?;
    let speaker = n.speaker().ok_or_else(|| {
        Error::InvalidParameter(format!("node {node} is a leaf and has no messages"))
    })?;
    let winning: Vec<&str> = n
        .edges()
        .iter()
        .filter(|e| {
            tree.subtree_leaves(e.child).any(|leaf| {
                tree.leaf_outcome(leaf)
                    .is_some_and(|(alloc, _)| !alloc.bundle(speaker).is_empty())
            })
        })
        .map(|e| e.label.as_str())
        .collect();
    Ok(VertexClassification {
        vertex: node,
        speaker,
        winning_messages: winning.len(),
        continue_or_quit: winning.len() <= 1,
        continue_message: if winning.len() == 1 {
            Some(winning[0].to_string())
        } else {
            None
        },
    })
}

/// Classifications of every internal vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureAudit {
    pub vertices: Vec<VertexClassification>,
    pub all_continue_or_quit: bool,
}

impl fmt::Display for StructureAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flagged: Vec<String> = self
            .vertices
            .iter()
            .filter(|v| !v.continue_or_quit)
            .map(|v| format!("#{} ({} winning messages)", v.vertex, v.winning_messages))
            .collect();
        write!(
            f,
            "STRUCTURE {} internal vertices, all continue-or-quit: {}",
            self.vertices.len(),
            self.all_continue_or_quit
        )?;
        if !flagged.is_empty() {
            write!(f, "; not continue-or-quit: {}", flagged.join(", "))?;
        }
        Ok(())
    }
}

pub fn audit_ascending_structure(tree: &MechanismTree) -> StructureAudit {
    let vertices: Vec<VertexClassification> = tree
        .internal_nodes()
        .map(|u| classify_continue_or_quit(tree, u).expect("internal node"))
        .collect();
    let all_continue_or_quit = vertices.iter().all(|v| v.continue_or_quit);
    StructureAudit {
        vertices,
        all_continue_or_quit,
    }
}

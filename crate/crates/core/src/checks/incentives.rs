use crate::error::Result;
use crate::model::{MechanismTree, NodeId, NodeKind};
use crate::rational::Rational;
use crate::strategy::StrategyTable;
use crate::valuation::Domain;

use super::{Context, Property, Verdict, Witness};

/// Individual rationality: realized utility is never negative.
pub fn check_ir(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<Verdict> {
    let ctx = Context::new(tree, strategies, domain)?;
    for profile in domain.profiles() {
        let leaf = ctx.play(&profile).leaf;
        for (i, &j) in profile.iter().enumerate() {
            let utility = ctx.utils[i][j][leaf];
            if utility.is_negative() {
                return Ok(Verdict::fail(
                    Property::Ir,
                    Witness::Ir {
                        player: i,
                        profile: ctx.labels(&profile),
                        behaviors: ctx.profile_behaviors(&profile),
                        leaf,
                        utility,
                    },
                ));
            }
        }
    }
    Ok(Verdict::pass(Property::Ir))
}

/// No negative transfers: realized payments are never negative.
pub fn check_nnt(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<Verdict> {
    let ctx = Context::new(tree, strategies, domain)?;
    for profile in domain.profiles() {
        let leaf = ctx.play(&profile).leaf;
        let (_, payments) = tree.leaf_outcome(leaf).expect("leaf");
        if let Some(i) = payments.iter().position(Rational::is_negative) {
            return Ok(Verdict::fail(
                Property::Nnt,
                Witness::Nnt {
                    player: i,
                    profile: ctx.labels(&profile),
                    behaviors: ctx.profile_behaviors(&profile),
                    leaf,
                    payment: payments[i],
                },
            ));
        }
    }
    Ok(Verdict::pass(Property::Nnt))
}

/// Best leaf (max utility) of every subtree. Children have larger preorder ids
/// than their parents, so a reverse scan is bottom-up.
fn subtree_max(tree: &MechanismTree, utils: &[Rational]) -> Vec<(Rational, NodeId)> {
    let mut best = vec![(Rational::ZERO, 0); tree.len()];
    for node in (0..tree.len()).rev() {
        best[node] = match &tree.node(node).kind {
            NodeKind::Leaf { .. } => (utils[node], node),
            NodeKind::Internal { edges, .. } => edges
                .iter()
                .map(|e| best[e.child])
                .reduce(|a, b| if b.0 > a.0 { b } else { a })
                .expect("internal nodes have edges"),
        };
    }
    best
}

/// Obvious strategy-proofness, vertex by vertex.
///
/// At every attainable vertex of player i with at least two messages, the
/// worst leaf reachable while i keeps following must be at least as good as
/// the best leaf below any other message.
pub fn check_osp(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<Verdict> {
    let ctx = Context::new(tree, strategies, domain)?;
    for i in 0..domain.n() {
        for j in 0..domain.player(i).len() {
            if let Some(w) = osp_violation(&ctx, i, j) {
                return Ok(Verdict::fail(Property::Osp, w));
            }
        }
    }
    Ok(Verdict::pass(Property::Osp))
}

fn osp_violation(ctx: &Context, i: usize, j: usize) -> Option<Witness> {
    let tree = ctx.tree;
    let utils = &ctx.utils[i][j];
    let behavior = ctx.behaviors[i][j];
    let best = subtree_max(tree, utils);

    // worst leaf while i follows
    let mut worst = vec![(Rational::ZERO, 0); tree.len()];
    for node in (0..tree.len()).rev() {
        worst[node] = match &tree.node(node).kind {
            NodeKind::Leaf { .. } => (utils[node], node),
            NodeKind::Internal { speaker, edges } if *speaker == i => {
                worst[edges[behavior.choice(node).expect("total")].child]
            }
            NodeKind::Internal { edges, .. } => edges
                .iter()
                .map(|e| worst[e.child])
                .reduce(|a, b| if b.0 < a.0 { b } else { a })
                .expect("internal nodes have edges"),
        };
    }

    // reached[u]: no node of i strictly above u steers away from it
    let mut reached = vec![false; tree.len()];
    reached[tree.root()] = true;
    for node in 0..tree.len() {
        if !reached[node] {
            continue;
        }
        let n = tree.node(node);
        let follow = if n.speaker() == Some(i) {
            behavior.choice(node)
        } else {
            None
        };
        for (idx, e) in n.edges().iter().enumerate() {
            reached[e.child] = follow.is_none_or(|c| c == idx);
        }
    }

    for u in tree.nodes_of(i) {
        let edges = tree.node(u).edges();
        if !reached[u] || edges.len() < 2 {
            continue;
        }
        let c = behavior.choice(u).expect("total");
        let (worst_follow, follow_leaf) = worst[edges[c].child];
        let (best_deviate, deviate_leaf) = edges
            .iter()
            .enumerate()
            .filter(|&(idx, _)| idx != c)
            .map(|(_, e)| best[e.child])
            .reduce(|a, b| if b.0 > a.0 { b } else { a })
            .expect("at least two edges");
        if worst_follow < best_deviate {
            let mut follow = ctx.opponents_routed(i, &[follow_leaf]);
            follow[i] = behavior.clone();
            let mut deviate = ctx.opponents_routed(i, &[deviate_leaf]);
            deviate[i] = behavior.routed_to(tree, deviate_leaf);
            return Some(Witness::Osp {
                player: i,
                valuation: ctx.domain.label(i, j).to_string(),
                vertex: u,
                follow,
                deviate,
                follow_leaf,
                deviate_leaf,
                worst_follow,
                best_deviate,
            });
        }
    }
    None
}

/// One achievable (follow utility, best-response utility) combination,
/// with the leaves realizing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pair {
    follow: Rational,
    best: Rational,
    follow_leaf: NodeId,
    best_leaf: NodeId,
}

/// Keeps pairs that are not dominated (lower follow, higher best response).
fn pareto(mut pairs: Vec<Pair>) -> Vec<Pair> {
    pairs.sort_by(|a, b| {
        a.follow
            .cmp(&b.follow)
            .then(b.best.cmp(&a.best))
            .then(a.follow_leaf.cmp(&b.follow_leaf))
            .then(a.best_leaf.cmp(&b.best_leaf))
    });
    let mut out: Vec<Pair> = Vec::with_capacity(pairs.len());
    for p in pairs {
        if out.last().is_none_or(|q| p.best > q.best) {
            out.push(p);
        }
    }
    out
}

/// Dominant-strategy incentive compatibility against every opponent behavior profile.
///
/// Opponent behaviors choose independently at each of their nodes, so the set
/// of achievable (follow, best response) utility pairs is computed bottom-up:
/// opponent nodes take the union over children, and at a node of i the best
/// response may switch to the best leaf under any other message.
pub fn check_dsic(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<Verdict> {
    let ctx = Context::new(tree, strategies, domain)?;
    for i in 0..domain.n() {
        for j in 0..domain.player(i).len() {
            if let Some(w) = dsic_violation(&ctx, i, j) {
                return Ok(Verdict::fail(Property::Dsic, w));
            }
        }
    }
    Ok(Verdict::pass(Property::Dsic))
}

fn dsic_violation(ctx: &Context, i: usize, j: usize) -> Option<Witness> {
    let tree = ctx.tree;
    let utils = &ctx.utils[i][j];
    let behavior = ctx.behaviors[i][j];
    let best = subtree_max(tree, utils);

    let mut sets: Vec<Vec<Pair>> = vec![Vec::new(); tree.len()];
    for node in (0..tree.len()).rev() {
        sets[node] = match &tree.node(node).kind {
            NodeKind::Leaf { .. } => vec![Pair {
                follow: utils[node],
                best: utils[node],
                follow_leaf: node,
                best_leaf: node,
            }],
            NodeKind::Internal { speaker, edges } if *speaker == i => {
                let c = behavior.choice(node).expect("total");
                let other = edges
                    .iter()
                    .enumerate()
                    .filter(|&(idx, _)| idx != c)
                    .map(|(_, e)| best[e.child])
                    .reduce(|a, b| if b.0 > a.0 { b } else { a });
                let lifted = sets[edges[c].child]
                    .iter()
                    .map(|p| match other {
                        Some((value, leaf)) if value > p.best => Pair {
                            best: value,
                            best_leaf: leaf,
                            ..*p
                        },
                        _ => *p,
                    })
                    .collect();
                pareto(lifted)
            }
            NodeKind::Internal { edges, .. } => pareto(
                edges
                    .iter()
                    .flat_map(|e| sets[e.child].iter().copied())
                    .collect(),
            ),
        };
        if let NodeKind::Internal { edges, .. } = &tree.node(node).kind {
            for e in edges {
                sets[e.child] = Vec::new();
            }
        }
    }

    let worst = sets[tree.root()]
        .iter()
        .filter(|p| p.best > p.follow)
        .max_by(|a, b| {
            (a.best - a.follow)
                .cmp(&(b.best - b.follow))
                .then(b.follow_leaf.cmp(&a.follow_leaf))
        })?;
    let opponents = ctx.opponents_routed(i, &[worst.follow_leaf, worst.best_leaf]);
    let mut follow = opponents.clone();
    follow[i] = behavior.clone();
    let mut deviate = opponents;
    deviate[i] = behavior.routed_to(tree, worst.best_leaf);
    Some(Witness::Dsic {
        player: i,
        valuation: ctx.domain.label(i, j).to_string(),
        follow,
        deviate,
        follow_leaf: worst.follow_leaf,
        deviate_leaf: worst.best_leaf,
        follow_utility: worst.follow,
        deviate_utility: worst.best,
    })
}

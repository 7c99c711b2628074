//! Random small instances and brute-force oracles shared by the test targets.

#![allow(dead_code)]

use ospcheck::checks::leaf_utility;
use ospcheck::mechanisms::MechanismBundle;
use ospcheck::model::{NodeKind, NodeSpecKind};
use ospcheck::strategy::StrategyTable;
use ospcheck::{
    build_tree, run, AuctionSetting, Behavior, Bundle, Domain, MechanismTree, NodeId, Rational,
    TreeSpec, Valuation,
};
use rand::Rng;

pub fn random_setting<R: Rng>(rng: &mut R) -> AuctionSetting {
    let (n, m) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    if rng.gen_bool(0.5) {
        AuctionSetting::combinatorial(n, m).unwrap()
    } else {
        AuctionSetting::multi_unit(n, m).unwrap()
    }
}

fn random_payment<R: Rng>(rng: &mut R) -> Rational {
    if rng.gen_bool(0.1) {
        Rational::new(rng.gen_range(1..=5), 2).unwrap()
    } else {
        Rational::integer(rng.gen_range(0..=3))
    }
}

fn grow<R: Rng>(
    rng: &mut R,
    s: &AuctionSetting,
    depth: usize,
    max_depth: usize,
    spec: &mut TreeSpec,
) -> usize {
    let internal = depth == 0 || (depth < max_depth && rng.gen_bool(0.55));
    if !internal {
        let allocs = s.all_allocations();
        let a = allocs[rng.gen_range(0..allocs.len())].clone();
        let pays = (0..s.n).map(|_| random_payment(rng)).collect();
        return spec.add_leaf(a, pays);
    }
    let speaker = rng.gen_range(0..s.n);
    let id = spec.add_internal(speaker, Vec::new());
    let width = rng.gen_range(2..=3);
    let mut edges = Vec::new();
    for e in 0..width {
        let c = grow(rng, s, depth + 1, max_depth, spec);
        edges.push((["a", "b", "c"][e].to_string(), c));
    }
    if let NodeSpecKind::Internal { edges: slot, .. } = &mut spec.nodes[id].kind {
        *slot = edges;
    }
    id
}

/// A random tree with at most `max_depth` internal levels.
pub fn random_tree<R: Rng>(rng: &mut R, s: &AuctionSetting, max_depth: usize) -> MechanismTree {
    let mut spec = TreeSpec::new();
    spec.root = grow(rng, s, 0, max_depth, &mut spec);
    build_tree(&spec, *s).unwrap()
}

pub fn random_domain<R: Rng>(rng: &mut R, s: &AuctionSetting, max_size: usize) -> Domain {
    let players = (0..s.n)
        .map(|_| {
            (0..rng.gen_range(1..=max_size))
                .map(|_| match s.kind {
                    ospcheck::SettingKind::Combinatorial => {
                        let values: Vec<i64> = (0..s.m).map(|_| rng.gen_range(0..=4)).collect();
                        Valuation::additive(&values)
                    }
                    ospcheck::SettingKind::MultiUnit => Valuation::single_minded_mu(
                        rng.gen_range(1..=s.m as u32),
                        rng.gen_range(0..=4),
                    ),
                })
                .collect()
        })
        .collect();
    Domain::unlabeled(*s, players).unwrap()
}

/// Best utility player i with valuation j can reach below `node` if the
/// others cooperate.
fn best_below(tree: &MechanismTree, d: &Domain, i: usize, j: usize, node: NodeId) -> Rational {
    tree.subtree_leaves(node)
        .map(|l| leaf_utility(tree, d, i, j, l).unwrap())
        .max()
        .unwrap()
}

/// Half of the valuations get uniformly random behaviors, the rest pick the
/// message with the best cooperative outcome, which often yields OSP.
pub fn random_strategies<R: Rng>(
    rng: &mut R,
    tree: &MechanismTree,
    d: &Domain,
) -> Vec<StrategyTable> {
    (0..d.n())
        .map(|i| {
            StrategyTable::from_domain(d, i, |j| {
                let greedy = rng.gen_bool(0.5);
                Behavior::from_fn(tree, i, |node| {
                    let edges = tree.node(node).edges();
                    if greedy {
                        (0..edges.len())
                            .max_by_key(|&e| best_below(tree, d, i, j, edges[e].child))
                            .unwrap()
                    } else {
                        rng.gen_range(0..edges.len())
                    }
                })
            })
            .unwrap()
        })
        .collect()
}

pub fn random_instance<R: Rng>(rng: &mut R) -> MechanismBundle {
    let s = random_setting(rng);
    let tree = random_tree(rng, &s, 3);
    let domain = random_domain(rng, &s, 3);
    let strategies = random_strategies(rng, &tree, &domain);
    MechanismBundle {
        tree,
        strategies,
        domain,
    }
}

/// Every behavior of `player` restricted to the nodes in `nodes`, as edge
/// choices; `None` when there would be more than `cap`.
pub fn all_behaviors(tree: &MechanismTree, player: usize, cap: usize) -> Option<Vec<Behavior>> {
    let nodes: Vec<NodeId> = tree.nodes_of(player).collect();
    let mut total = 1usize;
    for &n in &nodes {
        total = total.checked_mul(tree.node(n).edges().len())?;
        if total > cap {
            return None;
        }
    }
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        out.push(
            Behavior::from_fn(tree, player, |node| {
                let w = tree.node(node).edges().len();
                let c = code % w;
                code /= w;
                c
            })
            .unwrap(),
        );
    }
    Some(out)
}

/// Dominant-strategy check by enumerating every behavior of every player.
/// `None` when the enumeration would be too large.
pub fn brute_force_dsic(b: &MechanismBundle) -> Option<bool> {
    let (tree, d) = (&b.tree, &b.domain);
    let all: Vec<Vec<Behavior>> = (0..d.n())
        .map(|i| all_behaviors(tree, i, 4096))
        .collect::<Option<_>>()?;
    let mut combos = 1usize;
    for a in &all {
        combos = combos.checked_mul(a.len())?;
    }
    if combos > 200_000 {
        return None;
    }
    for i in 0..d.n() {
        let others: Vec<usize> = (0..d.n()).filter(|&x| x != i).collect();
        for j in 0..d.players()[i].len() {
            let follow = b.strategies[i].get(d.label(i, j)).unwrap();
            let opp_lists: Vec<&Vec<Behavior>> = others.iter().map(|&o| &all[o]).collect();
            let total: usize = opp_lists.iter().map(|l| l.len()).product();
            for mut code in 0..total {
                let mut profile: Vec<Behavior> = Vec::with_capacity(d.n());
                let mut k = 0;
                for p in 0..d.n() {
                    if p == i {
                        profile.push(follow.clone());
                    } else {
                        let w = opp_lists[k].len();
                        profile.push(opp_lists[k][code % w].clone());
                        code /= w;
                        k += 1;
                    }
                }
                let u = |prof: &[Behavior]| {
                    leaf_utility(tree, d, i, j, run(tree, prof).unwrap().leaf).unwrap()
                };
                let base = u(&profile);
                for dev in &all[i] {
                    profile[i] = dev.clone();
                    if u(&profile) > base {
                        return Some(false);
                    }
                }
            }
        }
    }
    Some(true)
}

/// Brute-force decisiveness: some behavior of `player` below `node` forces,
/// against every behavior of the others, a leaf with a superset of `bundle`
/// at payment at most `price`.
pub fn brute_force_decisive(
    tree: &MechanismTree,
    node: NodeId,
    player: usize,
    bundle: &Bundle,
    price: Rational,
) -> Option<bool> {
    let range = tree.subtree_range(node);
    let mine: Vec<NodeId> = range
        .clone()
        .filter(|&u| tree.node(u).speaker() == Some(player))
        .collect();
    let theirs: Vec<NodeId> = range
        .clone()
        .filter(|&u| matches!(tree.node(u).speaker(), Some(s) if s != player))
        .collect();
    let count = |nodes: &[NodeId]| -> Option<usize> {
        nodes.iter().try_fold(1usize, |acc, &u| {
            acc.checked_mul(tree.node(u).edges().len())
        })
    };
    let (cm, ct) = (count(&mine)?, count(&theirs)?);
    if cm.checked_mul(ct)? > 100_000 {
        return None;
    }
    let decode = |nodes: &[NodeId], mut code: usize| -> Vec<(NodeId, usize)> {
        nodes
            .iter()
            .map(|&u| {
                let w = tree.node(u).edges().len();
                let c = code % w;
                code /= w;
                (u, c)
            })
            .collect()
    };
    let good = |choices: &[(NodeId, usize)]| -> bool {
        let mut cur = node;
        loop {
            match &tree.node(cur).kind {
                NodeKind::Leaf {
                    allocation,
                    payments,
                } => {
                    return allocation.bundle(player).contains(bundle) && payments[player] <= price
                }
                NodeKind::Internal { edges, .. } => {
                    let c = choices.iter().find(|(u, _)| *u == cur).unwrap().1;
                    cur = edges[c].child;
                }
            }
        }
    };
    Some((0..cm).any(|a| {
        let mine_choice = decode(&mine, a);
        (0..ct).all(|b| {
            let mut all = mine_choice.clone();
            all.extend(decode(&theirs, b));
            good(&all)
        })
    }))
}

mod common;

use ospcheck::checks::{check_dsic, check_ir, check_nnt, check_osp, Ratio};
use ospcheck::format::{parse_mechanism, serialize_bundle};
use ospcheck::mechanisms::MechanismBundle;
use ospcheck::model::{NodeKind, NodeSpec, NodeSpecKind};
use ospcheck::search::{
    enumerate_normalized_mechanisms, falsify_impossibility, SearchOptions, SearchOutcome,
    SearchSpace,
};
use ospcheck::{
    attainable, build_tree, realize, run, AuctionSetting, Behavior, Domain, MechanismTree,
    Rational, TreeSpec, Valuation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn scaled_tree(tree: &MechanismTree, factor: Rational) -> MechanismTree {
    let nodes = tree
        .nodes()
        .map(|(_, n)| NodeSpec {
            name: n.name.clone(),
            kind: match &n.kind {
                NodeKind::Internal { speaker, edges } => NodeSpecKind::Internal {
                    speaker: *speaker,
                    edges: edges.iter().map(|e| (e.label.clone(), e.child)).collect(),
                },
                NodeKind::Leaf {
                    allocation,
                    payments,
                } => NodeSpecKind::Leaf {
                    allocation: allocation.clone(),
                    payments: payments.iter().map(|&p| p * factor).collect(),
                },
            },
        })
        .collect();
    build_tree(&TreeSpec { nodes, root: 0 }, *tree.setting()).unwrap()
}

/// Two-bidder multi-unit domains small enough for the unpruned search.
fn tiny_space(seed: u64) -> SearchSpace {
    let mut r = rng(seed);
    let m = r.gen_range(1..=2);
    let s = AuctionSetting::multi_unit(2, m).unwrap();
    let players = (0..2)
        .map(|_| {
            (0..r.gen_range(1..=2))
                .map(|_| Valuation::single_minded_mu(r.gen_range(1..=m as u32), r.gen_range(0..=3)))
                .collect()
        })
        .collect();
    let domain = Domain::unlabeled(s, players).unwrap();
    SearchSpace::new(domain, &[Rational::ZERO, Rational::ONE], Some(3)).unwrap()
}

fn exhaustive_best(space: &SearchSpace) -> Option<Ratio> {
    enumerate_normalized_mechanisms(space)
        .unwrap()
        .map(Result::unwrap)
        .filter(|b: &MechanismBundle| {
            check_osp(&b.tree, &b.strategies, &b.domain).unwrap().pass
                && check_ir(&b.tree, &b.strategies, &b.domain).unwrap().pass
                && check_nnt(&b.tree, &b.strategies, &b.domain).unwrap().pass
        })
        .map(|b| b.welfare_ratio().unwrap().ratio)
        .min()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn run_is_deterministic_and_walks_edges(seed in any::<u64>()) {
        let b = common::random_instance(&mut rng(seed));
        for profile in b.domain.profiles() {
            let beh: Vec<Behavior> = profile
                .iter()
                .enumerate()
                .map(|(i, &j)| b.strategies[i].get(b.domain.label(i, j)).unwrap().clone())
                .collect();
            let p1 = run(&b.tree, &beh).unwrap();
            prop_assert_eq!(&p1, &run(&b.tree, &beh).unwrap());
            prop_assert_eq!(p1.path[0], b.tree.root());
            prop_assert_eq!(*p1.path.last().unwrap(), p1.leaf);
            prop_assert!(b.tree.node(p1.leaf).is_leaf());
            for w in p1.path.windows(2) {
                let parent = b.tree.node(w[1]).parent.unwrap().0;
                prop_assert_eq!(parent, w[0]);
            }
        }
    }

    #[test]
    fn attainability_matches_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = common::random_setting(&mut r);
        let tree = common::random_tree(&mut r, &s, 3);
        let player = r.gen_range(0..s.n);
        let mine = common::all_behaviors(&tree, player, 512);
        prop_assume!(mine.is_some());
        let mine = mine.unwrap();
        let b = &mine[r.gen_range(0..mine.len())];
        let others: Option<Vec<Vec<Behavior>>> = (0..s.n)
            .filter(|&p| p != player)
            .map(|p| common::all_behaviors(&tree, p, 512))
            .collect();
        prop_assume!(others.is_some());
        let others = others.unwrap();
        let mut reached = std::collections::BTreeSet::new();
        let opp = others.first().cloned().unwrap_or_else(|| vec![Behavior::first_message(&tree, player)]);
        for o in &opp {
            let profile: Vec<Behavior> = if s.n == 1 {
                vec![b.clone()]
            } else if player == 0 {
                vec![b.clone(), o.clone()]
            } else {
                vec![o.clone(), b.clone()]
            };
            reached.extend(run(&tree, &profile).unwrap().path);
        }
        for u in tree.nodes_of(player) {
            prop_assert_eq!(attainable(&tree, player, b, u).unwrap(), reached.contains(&u));
        }
    }

    #[test]
    fn mechanism_files_round_trip(seed in any::<u64>()) {
        let b = common::random_instance(&mut rng(seed));
        let text = serialize_bundle(&b).unwrap();
        let back = parse_mechanism(text.as_bytes()).unwrap().into_bundle(None).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(serialize_bundle(&back).unwrap(), text);
    }

    #[test]
    fn realize_covers_every_profile(seed in any::<u64>()) {
        let b = common::random_instance(&mut rng(seed));
        let table = realize(&b.tree, &b.strategies, &b.domain).unwrap();
        prop_assert_eq!(table.len(), b.domain.profile_count());
        for (e, profile) in table.entries().iter().zip(b.domain.profiles()) {
            prop_assert_eq!(&e.profile, &profile);
            prop_assert!(b.tree.node(e.leaf).is_leaf());
            prop_assert_eq!(table.get(&profile), Some(e));
        }
    }

    #[test]
    fn verdicts_survive_scaling(seed in any::<u64>(), num in 1i64..6, den in 1i64..4) {
        let b = common::random_instance(&mut rng(seed));
        let f = Rational::new(num, den).unwrap();
        let tree = scaled_tree(&b.tree, f);
        let domain = b.domain.scaled(f);
        prop_assert_eq!(
            check_osp(&b.tree, &b.strategies, &b.domain).unwrap().pass,
            check_osp(&tree, &b.strategies, &domain).unwrap().pass
        );
        prop_assert_eq!(
            check_ir(&b.tree, &b.strategies, &b.domain).unwrap().pass,
            check_ir(&tree, &b.strategies, &domain).unwrap().pass
        );
        prop_assert_eq!(
            b.welfare_ratio().unwrap().ratio,
            MechanismBundle { tree, strategies: b.strategies.clone(), domain }
                .welfare_ratio()
                .unwrap()
                .ratio
        );
    }

    #[test]
    fn osp_implies_dsic_and_dsic_matches_brute_force(seed in any::<u64>()) {
        let b = common::random_instance(&mut rng(seed));
        let osp = check_osp(&b.tree, &b.strategies, &b.domain).unwrap();
        let dsic = check_dsic(&b.tree, &b.strategies, &b.domain).unwrap();
        prop_assert!(!osp.pass || dsic.pass);
        if let Some(expected) = common::brute_force_dsic(&b) {
            prop_assert_eq!(dsic.pass, expected);
        }
        if let Some(w) = dsic.witness {
            prop_assert!(w.replay(&b.tree, &b.domain).unwrap());
        }
    }

    #[test]
    fn decisiveness_is_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = common::random_setting(&mut r);
        let tree = common::random_tree(&mut r, &s, 3);
        let node = r.gen_range(0..tree.len());
        let player = r.gen_range(0..s.n);
        let bundles = s.all_bundles();
        for bundle in &bundles {
            for p in 0..4 {
                let price = Rational::integer(p);
                let d = ospcheck::structure::is_decisive(&tree, node, player, bundle, price).unwrap();
                if let Some(o) = common::brute_force_decisive(&tree, node, player, bundle, price) {
                    prop_assert_eq!(d, o);
                }
                if d {
                    let up = ospcheck::structure::is_decisive(&tree, node, player, bundle, price + Rational::ONE);
                    prop_assert!(up.unwrap());
                    for smaller in bundles.iter().filter(|c| bundle.contains(c)) {
                        let ok = ospcheck::structure::is_decisive(&tree, node, player, smaller, price);
                        prop_assert!(ok.unwrap());
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn stream_is_deterministic_and_depth_capped(seed in any::<u64>()) {
        let space = tiny_space(seed);
        let a: Vec<String> = enumerate_normalized_mechanisms(&space)
            .unwrap()
            .take(300)
            .map(|b| serialize_bundle(&b.unwrap()).unwrap())
            .collect();
        let b: Vec<String> = enumerate_normalized_mechanisms(&space)
            .unwrap()
            .take(300)
            .map(|b| serialize_bundle(&b.unwrap()).unwrap())
            .collect();
        prop_assert_eq!(&a, &b);
        for bundle in enumerate_normalized_mechanisms(&space).unwrap().take(300) {
            prop_assert!(bundle.unwrap().tree.depth() <= space.max_depth());
        }
    }

    #[test]
    fn pruning_is_sound(seed in any::<u64>(), target in prop::sample::select(vec![(3, 2), (2, 1), (3, 1)])) {
        let space = tiny_space(seed);
        let target = Rational::new(target.0, target.1).unwrap();
        let best = exhaustive_best(&space);
        let expect = best.is_some_and(|r| r.is_below(target));
        for pruning in [true, false] {
            let v = falsify_impossibility(
                &space,
                target,
                &SearchOptions { pruning, workers: Some(1), budget: None },
            )
            .unwrap();
            let found = matches!(v.outcome, SearchOutcome::Counterexample { reverified: true, .. });
            prop_assert_eq!(found, expect, "pruning {}", pruning);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_verdict(seed in any::<u64>()) {
        let space = tiny_space(seed);
        let run_with = |w| {
            falsify_impossibility(
                &space,
                Rational::new(3, 2).unwrap(),
                &SearchOptions { pruning: true, workers: Some(w), budget: None },
            )
            .unwrap()
        };
        let (one, three) = (run_with(1), run_with(3));
        prop_assert_eq!(one.outcome.name(), three.outcome.name());
        prop_assert_eq!(one.examined, three.examined);
        if let (
            SearchOutcome::Counterexample { bundle: a, .. },
            SearchOutcome::Counterexample { bundle: b, .. },
        ) = (&one.outcome, &three.outcome)
        {
            prop_assert_eq!(a, b);
        }
    }
}

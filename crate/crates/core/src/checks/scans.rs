use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MechanismTree, NodeId};
use crate::rational::Rational;
use crate::strategy::StrategyTable;
use crate::valuation::{Domain, ProfileIter};

use super::Context;

/// Two profiles whose paths share a vertex of player i where her strategy
/// sends different messages, although she prefers the other profile's leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BadLeafGoodLeaf {
    pub player: usize,
    pub vertex: NodeId,
    pub bad_profile: Vec<String>,
    pub good_profile: Vec<String>,
    pub bad_leaf: NodeId,
    pub good_leaf: NodeId,
    pub bad_utility: Rational,
    pub good_utility: Rational,
}

/// Every bad-leaf/good-leaf triple over the domain. Empty for OSP strategies.
pub fn scan_bad_leaf_good_leaf(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<Vec<BadLeafGoodLeaf>> {
    let ctx = Context::new(tree, strategies, domain)?;
    let profiles: Vec<Vec<usize>> = domain.profiles().collect();
    let plays: Vec<_> = profiles.iter().map(|p| ctx.play(p)).collect();
    let mut out = Vec::new();
    for (a, pa) in profiles.iter().enumerate() {
        for (b, pb) in profiles.iter().enumerate() {
            if a == b {
                continue;
            }
            let (la, lb) = (plays[a].leaf, plays[b].leaf);
            for (i, (&va, &vb)) in pa.iter().zip(pb).enumerate() {
                if va == vb {
                    continue;
                }
                let (ua, ub) = (ctx.utils[i][va][la], ctx.utils[i][va][lb]);
                if ua >= ub {
                    continue;
                }
                let (ba, bb) = (ctx.behaviors[i][va], ctx.behaviors[i][vb]);
                for &u in &plays[a].path {
                    if tree.node(u).speaker() == Some(i)
                        && plays[b].path.contains(&u)
                        && ba.choice(u) != bb.choice(u)
                    {
                        out.push(BadLeafGoodLeaf {
                            player: i,
                            vertex: u,
                            bad_profile: ctx.labels(pa),
                            good_profile: ctx.labels(pb),
                            bad_leaf: la,
                            good_leaf: lb,
                            bad_utility: ua,
                            good_utility: ub,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The shallowest vertex where two profiles from a subset product part ways.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub vertex: NodeId,
    pub player: usize,
    /// The two valuations of `player` sending different messages at `vertex`.
    pub valuations: (String, String),
    pub profiles: (Vec<String>, Vec<String>),
}

/// Breadth-first search for the first divergence; ties at equal depth go to
/// the lower preorder id. `subsets[i]` lists valuation indices of player i.
pub fn first_divergence(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
    subsets: &[Vec<usize>],
) -> Result<Option<Divergence>> {
    let ctx = Context::new(tree, strategies, domain)?;
    if subsets.len() != domain.n() {
        return Err(Error::InvalidParameter(
            "one subset per player required".into(),
        ));
    }
    for (i, s) in subsets.iter().enumerate() {
        if let Some(&bad) = s.iter().find(|&&j| j >= domain.player(i).len()) {
            return Err(Error::InvalidParameter(format!(
                "player {i} has no valuation #{bad}"
            )));
        }
    }

    // first profile through each node, and the edge it took
    let mut first: Vec<Option<(Vec<usize>, usize)>> = vec![None; tree.len()];
    // (divergence key, first profile, second profile)
    type Candidate = ((usize, NodeId), Vec<usize>, Vec<usize>);
    let mut best: Option<Candidate> = None;
    for choice in ProfileIter::new(subsets.iter().map(Vec::len).collect()) {
        let profile: Vec<usize> = choice
            .iter()
            .enumerate()
            .map(|(i, &c)| subsets[i][c])
            .collect();
        let play = ctx.play(&profile);
        for w in play.path.windows(2) {
            let (u, next) = (w[0], w[1]);
            let edge = tree.node(next).parent.expect("non-root").1;
            match &first[u] {
                None => first[u] = Some((profile.clone(), edge)),
                Some((p, e)) if *e != edge => {
                    let key = (tree.node(u).depth, u);
                    if best.as_ref().is_none_or(|b| key < b.0) {
                        best = Some((key, p.clone(), profile.clone()));
                    }
                }
                Some(_) => {}
            }
        }
    }
    Ok(best.map(|((_, vertex), a, b)| {
        let player = tree.node(vertex).speaker().expect("internal");
        Divergence {
            vertex,
            player,
            valuations: (
                domain.label(player, a[player]).to_string(),
                domain.label(player, b[player]).to_string(),
            ),
            profiles: (ctx.labels(&a), ctx.labels(&b)),
        }
    }))
}

/// One payment-bound assertion evaluated at a specific profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundCheck {
    pub claim: String,
    pub profile: Vec<String>,
    pub player: usize,
    /// False when the premise (e.g. "wins all units") does not occur.
    pub applicable: bool,
    pub holds: bool,
    pub payment: Rational,
    pub bound: Rational,
}

/// Payment bounds for the multi-unit adversarial domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaymentBoundAudit {
    pub checks: Vec<BoundCheck>,
}

impl PaymentBoundAudit {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }
}

/// Audits the payment bounds every OSP, IR, NNT mechanism with a good ratio
/// must satisfy on the multi-unit adversarial domain (players 0 and 1 carry
/// the `one`/`ONE`/`all` sets, all others `one`):
///
/// - at the all-`one` profile every winner pays at most 1;
/// - at (`ONE`, `all`) the `ONE` bidder gets nothing and pays 0;
/// - at (`all`, `one`) a bidder winning every unit pays at most k².
pub fn audit_payment_bounds(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<PaymentBoundAudit> {
    let ctx = Context::new(tree, strategies, domain)?;
    let setting = domain.setting();
    let n = domain.n();
    let find = |i: usize, label: &str| {
        domain.find(i, label).ok_or_else(|| {
            Error::InvalidDomain(format!(
                "player {i} lacks the {label:?} valuation of the adversarial domain"
            ))
        })
    };
    let all_one: Vec<usize> = (0..n).map(|i| find(i, "one")).collect::<Result<_>>()?;
    let k = setting.k();
    let grand = setting.grand_bundle();
    let mut checks = Vec::new();

    let outcome = |profile: &[usize]| {
        let leaf = ctx.play(profile).leaf;
        let (alloc, pay) = tree.leaf_outcome(leaf).expect("leaf");
        (alloc.clone(), pay.to_vec())
    };

    let (alloc, pay) = outcome(&all_one);
    for (i, &paid) in pay.iter().enumerate() {
        let wins = !alloc.bundle(i).is_empty();
        checks.push(BoundCheck {
            claim: "winner pays at most 1 when everyone reports one".into(),
            profile: ctx.labels(&all_one),
            player: i,
            applicable: wins,
            holds: !wins || paid <= Rational::ONE,
            payment: paid,
            bound: Rational::ONE,
        });
    }

    for (a, b) in [(0usize, 1usize), (1, 0)] {
        let mut profile = all_one.clone();
        profile[a] = find(a, "ONE")?;
        profile[b] = find(b, "all")?;
        let (alloc, pay) = outcome(&profile);
        checks.push(BoundCheck {
            claim: "ONE bidder facing all gets nothing and pays 0".into(),
            profile: ctx.labels(&profile),
            player: a,
            applicable: true,
            holds: alloc.bundle(a).is_empty() && pay[a].is_zero(),
            payment: pay[a],
            bound: Rational::ZERO,
        });

        let mut profile = all_one.clone();
        profile[a] = find(a, "all")?;
        let (alloc, pay) = outcome(&profile);
        let wins_all = alloc.bundle(a).contains(&grand);
        let bound = Rational::integer(k * k);
        checks.push(BoundCheck {
            claim: "bidder winning every unit as all pays at most k^2".into(),
            profile: ctx.labels(&profile),
            player: a,
            applicable: wins_all,
            holds: !wins_all || pay[a] <= bound,
            payment: pay[a],
            bound,
        });
    }
    Ok(PaymentBoundAudit { checks })
}

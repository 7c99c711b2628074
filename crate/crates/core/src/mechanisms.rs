//! Reference mechanisms with their truthful strategies and intended domains.

use crate::checks::{self, Property, RatioReport, Verdict};
use crate::error::{Error, Result};
use crate::model::{
    build_tree, Allocation, AuctionSetting, Behavior, Bundle, MechanismTree, NodeId, NodeSpec,
    NodeSpecKind, SettingKind, TreeSpec,
};
use crate::rational::Rational;
use crate::strategy::StrategyTable;
use crate::valuation::{
    adversarial_domain, bundle_index, restricted_additive_domain, AdversarialFamily, Domain,
    LabeledValuation, Valuation,
};

/// A tree, one strategy table per player and the domain the strategies cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MechanismBundle {
    pub tree: MechanismTree,
    pub strategies: Vec<StrategyTable>,
    pub domain: Domain,
}

impl MechanismBundle {
    pub fn check(&self, property: Property) -> Result<Verdict> {
        let (t, s, d) = (&self.tree, self.strategies.as_slice(), &self.domain);
        match property {
            Property::Ir => checks::check_ir(t, s, d),
            Property::Nnt => checks::check_nnt(t, s, d),
            Property::Osp => checks::check_osp(t, s, d),
            Property::Dsic => checks::check_dsic(t, s, d),
        }
    }

    pub fn check_all(&self, properties: &[Property]) -> Result<Vec<Verdict>> {
        properties.iter().map(|&p| self.check(p)).collect()
    }

    pub fn welfare_ratio(&self) -> Result<RatioReport> {
        checks::welfare_ratio(&self.tree, &self.strategies, &self.domain)
    }

    /// Replaces the domain, re-deriving strategies from a per-valuation rule.
    fn with_strategies<F>(tree: MechanismTree, domain: Domain, mut rule: F) -> Result<Self>
    where
        F: FnMut(usize, &Valuation, NodeId) -> usize,
    {
        let strategies = (0..domain.n())
            .map(|i| {
                StrategyTable::from_domain(&domain, i, |j| {
                    let v = domain.valuation(i, j);
                    Behavior::from_fn(&tree, i, |node| rule(i, v, node))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MechanismBundle {
            tree,
            strategies,
            domain,
        })
    }
}

/// Builds a spec in preorder with pre-sorted labels, so that spec indices
/// coincide with the canonical node ids of the built tree.
pub(crate) struct Preorder<T> {
    spec: TreeSpec,
    info: Vec<T>,
}

impl<T> Preorder<T> {
    pub(crate) fn new() -> Self {
        Preorder {
            spec: TreeSpec::new(),
            info: Vec::new(),
        }
    }

    pub(crate) fn leaf(
        &mut self,
        allocation: Allocation,
        payments: Vec<Rational>,
        info: T,
    ) -> usize {
        self.info.push(info);
        self.spec.add_leaf(allocation, payments)
    }

    pub(crate) fn open(&mut self, speaker: usize, info: T) -> usize {
        self.info.push(info);
        self.spec.add_internal(speaker, Vec::new())
    }

    pub(crate) fn edge(&mut self, node: usize, label: impl Into<String>, child: usize) {
        if let NodeSpecKind::Internal { edges, .. } = &mut self.spec.nodes[node].kind {
            edges.push((label.into(), child));
        }
    }

    pub(crate) fn finish(self, setting: AuctionSetting) -> Result<(MechanismTree, Vec<T>)> {
        let tree = build_tree(&self.spec, setting)?;
        debug_assert!(self
            .spec
            .nodes
            .iter()
            .enumerate()
            .all(|(id, n)| match &n.kind {
                NodeSpecKind::Internal { edges, .. } => edges
                    .iter()
                    .zip(tree.node(id).edges())
                    .all(|((_, c), e)| *c == e.child),
                NodeSpecKind::Leaf { .. } => true,
            }));
        Ok((tree, self.info))
    }
}

fn single_winner(
    setting: &AuctionSetting,
    winner: usize,
    price: Rational,
) -> (Allocation, Vec<Rational>) {
    let mut bundles = vec![setting.empty_bundle(); setting.n];
    bundles[winner] = setting.grand_bundle();
    let mut payments = vec![Rational::ZERO; setting.n];
    payments[winner] = price;
    (Allocation(bundles), payments)
}

fn value_domain(setting: &AuctionSetting, k: u32) -> Result<Domain> {
    let list: Vec<LabeledValuation> = (1..=k as i64)
        .map(|v| LabeledValuation {
            label: v.to_string(),
            valuation: Valuation::additive(&[v]),
        })
        .collect();
    Domain::new(*setting, vec![list; setting.n])
}

#[derive(Debug, Clone, Copy)]
enum Announce {
    First,
    Second,
    Leaf,
}

/// Two bidders announce values in `1..=k` one after the other; the higher
/// value wins (ties to `tie_winner`).
fn sequential_single_item(
    k: u32,
    first: usize,
    tie_winner: usize,
    price: impl Fn(u32, u32, usize) -> u32,
) -> Result<MechanismBundle> {
    if k < 1 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if first > 1 || tie_winner > 1 {
        return Err(Error::InvalidParameter("players are 0 and 1".into()));
    }
    let setting = AuctionSetting::combinatorial(2, 1)?;
    let second = 1 - first;
    let mut b = Preorder::new();
    let root = b.open(first, Announce::First);
    b.spec.name(root, "N1");
    let mut leaf_no = 0;
    for a in 1..=k {
        let node = b.open(second, Announce::Second);
        b.spec.name(node, format!("N{}", a + 1));
        b.edge(root, a.to_string(), node);
        for v in 1..=k {
            let winner = match a.cmp(&v) {
                std::cmp::Ordering::Greater => first,
                std::cmp::Ordering::Less => second,
                std::cmp::Ordering::Equal => tie_winner,
            };
            let p = price(a, v, winner);
            let (alloc, pay) = single_winner(&setting, winner, Rational::integer(p as i64));
            let leaf = b.leaf(alloc, pay, Announce::Leaf);
            leaf_no += 1;
            b.spec.name(leaf, format!("L{leaf_no}"));
            b.edge(node, v.to_string(), leaf);
        }
    }
    let (tree, info) = b.finish(setting)?;
    let domain = value_domain(&setting, k)?;
    MechanismBundle::with_strategies(tree, domain, |_, v, node| {
        let value = v.evaluate(&Bundle::Items(1)).expect("single item").numer() as usize;
        match info[node] {
            Announce::First | Announce::Second => value - 1,
            Announce::Leaf => unreachable!("leaves have no speaker"),
        }
    })
}

/// Sequential second-price auction of one item between players 0 and 1.
///
/// `first` speaks first and announces a value in `1..=k`, the other player
/// responds; the winner pays the other's announced value. With `k = 2`,
/// `first = 0` and `tie_winner = 1` this is the protocol of the two-duck
/// example (node names `N1..N3`, leaves `L1..L4`).
pub fn second_price_single_item(
    k: u32,
    first: usize,
    tie_winner: usize,
) -> Result<MechanismBundle> {
    sequential_single_item(
        k,
        first,
        tie_winner,
        |a, v, winner| {
            if winner == first {
                v
            } else {
                a
            }
        },
    )
}

/// Same shape as [`second_price_single_item`], but the winner pays her own
/// announcement and the first speaker wins ties. Not strategy-proof.
pub fn first_price_single_item(k: u32) -> Result<MechanismBundle> {
    sequential_single_item(k, 0, 0, |a, v, winner| if winner == 0 { a } else { v })
}

#[derive(Debug, Clone, Copy)]
enum Clock {
    Ask { price: u32 },
    Leaf,
}

/// Clock auction for the grand bundle at prices `1..=k`.
///
/// In each round the active bidders are asked in index order whether they
/// stay at the current price; quitting is final. As soon as at most one
/// bidder is active the auction ends and she wins, paying the last price she
/// accepted. If several bidders accept price `k`, the lowest index wins at `k`.
fn clock_tree(setting: &AuctionSetting, k: u32) -> Result<(MechanismTree, Vec<Clock>)> {
    if k < 1 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let mut b = Preorder::new();
    if setting.n == 1 {
        let (alloc, pay) = single_winner(setting, 0, Rational::ONE);
        b.leaf(alloc, pay, Clock::Leaf);
        return b.finish(*setting);
    }

    fn grow(
        b: &mut Preorder<Clock>,
        setting: &AuctionSetting,
        k: u32,
        price: u32,
        to_ask: &[usize],
        stayed: &[usize],
    ) -> usize {
        let active = to_ask.len() + stayed.len();
        if active <= 1 {
            let (winner, paid) = match (stayed.first(), to_ask.first()) {
                (Some(&w), _) => (w, price),
                (None, Some(&w)) => (w, price - 1),
                (None, None) => unreachable!("a bidder is always active"),
            };
            let (alloc, pay) = single_winner(setting, winner, Rational::integer(paid as i64));
            return b.leaf(alloc, pay, Clock::Leaf);
        }
        let Some((&bidder, rest)) = to_ask.split_first() else {
            if price == k {
                let (alloc, pay) = single_winner(setting, stayed[0], Rational::integer(k as i64));
                return b.leaf(alloc, pay, Clock::Leaf);
            }
            return grow(b, setting, k, price + 1, stayed, &[]);
        };
        let node = b.open(bidder, Clock::Ask { price });
        let quit = grow(b, setting, k, price, rest, stayed);
        b.edge(node, "quit", quit);
        let mut with = stayed.to_vec();
        with.push(bidder);
        let stay = grow(b, setting, k, price, rest, &with);
        b.edge(node, "stay", stay);
        node
    }

    let everyone: Vec<usize> = (0..setting.n).collect();
    grow(&mut b, setting, k, 1, &everyone, &[]);
    b.finish(*setting)
}

/// Truthful clock behavior: stay while the price does not exceed the value
/// of the grand bundle.
fn clock_bundle(setting: &AuctionSetting, k: u32, domain: Domain) -> Result<MechanismBundle> {
    if domain.setting() != setting {
        return Err(Error::InvalidParameter(
            "domain setting does not match".into(),
        ));
    }
    let (tree, info) = clock_tree(setting, k)?;
    let grand = setting.grand_bundle();
    MechanismBundle::with_strategies(tree, domain, |_, v, node| match info[node] {
        Clock::Ask { price } => {
            let value = v.evaluate(&grand).expect("setting checked");
            usize::from(Rational::integer(price as i64) <= value)
        }
        Clock::Leaf => unreachable!("leaves have no speaker"),
    })
}

/// Ascending clock auction of a single item among `n` bidders with values in `1..=k`.
pub fn ascending_single_item(k: u32, n: usize) -> Result<MechanismBundle> {
    let setting = AuctionSetting::combinatorial(n, 1)?;
    if k < 1 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    clock_bundle(&setting, k, value_domain(&setting, k)?)
}

/// Ascending clock auction selling all items as one prize.
///
/// The intended domain is the single-minded adversarial domain of the
/// setting when `n, m >= 2`, otherwise grand-bundle single-minded values in `1..=k`.
pub fn grand_bundle_ascending(setting: &AuctionSetting, k: u32) -> Result<MechanismBundle> {
    if k < 1 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let domain = if setting.n >= 2 && setting.m >= 2 {
        let family = match setting.kind {
            SettingKind::MultiUnit => AdversarialFamily::MuSingleMinded,
            SettingKind::Combinatorial => AdversarialFamily::CaSingleMinded,
        };
        adversarial_domain(setting, family)?
    } else {
        let list: Vec<LabeledValuation> = (1..=k as i64)
            .map(|v| LabeledValuation {
                label: v.to_string(),
                valuation: match setting.kind {
                    SettingKind::MultiUnit => Valuation::single_minded_mu(setting.m as u32, v),
                    SettingKind::Combinatorial => Valuation::SingleMindedCa {
                        bundle: setting.grand_bundle(),
                        value: Rational::integer(v),
                    },
                },
            })
            .collect();
        Domain::new(*setting, vec![list; setting.n])?
    };
    clock_bundle(setting, k, domain)
}

/// [`grand_bundle_ascending`] with truthful strategies over a caller-supplied domain.
pub fn grand_bundle_ascending_over(domain: &Domain, k: u32) -> Result<MechanismBundle> {
    clock_bundle(domain.setting(), k, domain.clone())
}

/// Smallest clock cap covering every value of the adversarial fixtures: `k^4 + 1`.
pub fn default_clock_cap(setting: &AuctionSetting) -> u32 {
    let k = setting.k() as u32;
    k.pow(4) + 1
}

#[derive(Debug, Clone, Copy)]
enum Posted {
    /// Round 1: does the speaker value `item` at the high value?
    High {
        item: usize,
    },
    /// Round 2: does the speaker value `item` at least at the low value?
    Low {
        item: usize,
    },
    Leaf,
}

/// Serial posted-price mechanism for additive values in `{0, x_l, x_h}`.
///
/// Round 1 visits players in index order; each is asked, item by item, about
/// the remaining items she values at `x_h` and takes those at price `x_l`.
/// Round 2 repeats the walk for items valued at least `x_l`, again at `x_l`.
pub fn serial_posted_price(
    x_l: Rational,
    x_h: Rational,
    setting: &AuctionSetting,
) -> Result<MechanismBundle> {
    let domain = restricted_additive_domain(x_l, x_h, setting)?;
    let mut b = Preorder::new();

    #[allow(clippy::too_many_arguments)]
    fn grow(
        b: &mut Preorder<Posted>,
        setting: &AuctionSetting,
        x_l: Rational,
        round: usize,
        player: usize,
        item: usize,
        owner: &mut Vec<Option<usize>>,
    ) -> usize {
        let (n, m) = (setting.n, setting.m);
        // advance to the next (round, player, item) whose item is still free
        let (mut round, mut player, mut item) = (round, player, item);
        loop {
            if round == 2 {
                let mut bundles = vec![0u64; n];
                let mut payments = vec![Rational::ZERO; n];
                for (j, o) in owner.iter().enumerate() {
                    if let Some(i) = *o {
                        bundles[i] |= 1 << j;
                        payments[i] += x_l;
                    }
                }
                let alloc = Allocation(bundles.into_iter().map(Bundle::Items).collect());
                return b.leaf(alloc, payments, Posted::Leaf);
            }
            if item == m {
                item = 0;
                player += 1;
            }
            if player == n {
                player = 0;
                round += 1;
                continue;
            }
            if owner[item].is_none() {
                break;
            }
            item += 1;
        }
        let info = if round == 0 {
            Posted::High { item }
        } else {
            Posted::Low { item }
        };
        let node = b.open(player, info);
        let no = grow(b, setting, x_l, round, player, item + 1, owner);
        b.edge(node, "no", no);
        owner[item] = Some(player);
        let yes = grow(b, setting, x_l, round, player, item + 1, owner);
        owner[item] = None;
        b.edge(node, "yes", yes);
        node
    }

    let mut owner = vec![None; setting.m];
    grow(&mut b, setting, x_l, 0, 0, 0, &mut owner);
    let (tree, info) = b.finish(*setting)?;
    MechanismBundle::with_strategies(tree, domain, |_, v, node| {
        let item_value = |item: usize| {
            v.evaluate(&Bundle::Items(1 << item))
                .expect("combinatorial setting")
        };
        match info[node] {
            Posted::High { item } => usize::from(item_value(item) >= x_h),
            Posted::Low { item } => usize::from(item_value(item) >= x_l),
            Posted::Leaf => unreachable!("leaves have no speaker"),
        }
    })
}

/// Winners' payments never exceed their value for the bundle they receive.
pub fn payments_within_values(bundle: &MechanismBundle) -> Result<bool> {
    let tables = bundle.domain.value_tables();
    let outcomes = crate::strategy::realize(&bundle.tree, &bundle.strategies, &bundle.domain)?;
    Ok(outcomes.entries().iter().all(|e| {
        e.profile
            .iter()
            .enumerate()
            .all(|(i, &j)| e.payments[i] <= tables[i][j][bundle_index(e.allocation.bundle(i))])
    }))
}

/// A tree consisting of a single leaf.
pub fn single_leaf(
    setting: &AuctionSetting,
    allocation: Allocation,
    payments: Vec<Rational>,
) -> Result<MechanismTree> {
    let spec = TreeSpec {
        nodes: vec![NodeSpec {
            name: None,
            kind: NodeSpecKind::Leaf {
                allocation,
                payments,
            },
        }],
        root: 0,
    };
    build_tree(&spec, *setting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::run;

    fn r(v: i64) -> Rational {
        Rational::integer(v)
    }

    fn truthful(bundle: &MechanismBundle, labels: &[&str]) -> Vec<Behavior> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| bundle.strategies[i].get(l).unwrap().clone())
            .collect()
    }

    fn outcome(bundle: &MechanismBundle, labels: &[&str]) -> (Allocation, Vec<Rational>) {
        let leaf = run(&bundle.tree, &truthful(bundle, labels)).unwrap().leaf;
        let (a, p) = bundle.tree.leaf_outcome(leaf).unwrap();
        (a.clone(), p.to_vec())
    }

    #[test]
    fn figure_one_shape() {
        let b = second_price_single_item(2, 0, 1).unwrap();
        assert_eq!(b.tree.internal_nodes().count(), 3);
        assert_eq!(b.tree.leaves().count(), 4);
        assert_eq!(b.tree.depth(), 2);
        // sunglasses (player 0) reports 2, jacket reports 1: sunglasses wins at 1
        let (a, p) = outcome(&b, &["2", "1"]);
        assert_eq!(a.0[0], Bundle::Items(1));
        assert_eq!(p, vec![r(1), r(0)]);
        // tie goes to the jacket
        let (a, _) = outcome(&b, &["1", "1"]);
        assert_eq!(a.0[1], Bundle::Items(1));
    }

    #[test]
    fn second_price_k1_single_leaf_per_branch() {
        let b = second_price_single_item(1, 0, 0).unwrap();
        assert_eq!(b.tree.leaves().count(), 1);
        let (_, p) = outcome(&b, &["1", "1"]);
        assert_eq!(p, vec![r(1), r(0)]);
        assert!(second_price_single_item(0, 0, 0).is_err());
    }

    #[test]
    fn clock_simulation() {
        let b = ascending_single_item(2, 2).unwrap();
        let (a, p) = outcome(&b, &["2", "1"]);
        // bidder 1 quits at price 2, which bidder 0 has just accepted
        assert_eq!(a.0[0], Bundle::Items(1));
        assert_eq!(p[0], r(2));
        // equal values: bidder 0 quits first at price 2, bidder 1 wins at 1
        let (a, p) = outcome(&b, &["1", "1"]);
        assert_eq!(a.0[1], Bundle::Items(1));
        assert_eq!(p[1], r(1));
        // with a single price both accept it and the lowest index wins
        let b1 = ascending_single_item(1, 2).unwrap();
        let (a, p) = outcome(&b1, &["1", "1"]);
        assert_eq!(a.0[0], Bundle::Items(1));
        assert_eq!(p[0], r(1));
        // one bidder wins immediately at price 1
        let solo = ascending_single_item(3, 1).unwrap();
        assert_eq!(solo.tree.len(), 1);
        assert_eq!(outcome(&solo, &["2"]).1, vec![r(1)]);
    }

    #[test]
    fn grand_bundle_all_bidder_wins() {
        let s = AuctionSetting::multi_unit(2, 2).unwrap();
        let b = grand_bundle_ascending(&s, default_clock_cap(&s)).unwrap();
        let (a, p) = outcome(&b, &["all", "one"]);
        assert_eq!(a.0, vec![Bundle::Units(2), Bundle::Units(0)]);
        assert!(p[0] <= r(16));
        assert!(payments_within_values(&b).unwrap());
    }

    #[test]
    fn posted_price_trace() {
        let s = AuctionSetting::combinatorial(2, 2).unwrap();
        let b = serial_posted_price(r(1), r(3), &s).unwrap();
        let (a, p) = outcome(&b, &["3,1", "3,3"]);
        assert_eq!(a.0, vec![Bundle::Items(0b01), Bundle::Items(0b10)]);
        assert_eq!(p, vec![r(1), r(1)]);
        let (a, p) = outcome(&b, &["0,0", "0,0"]);
        assert_eq!(a.0, vec![Bundle::Items(0), Bundle::Items(0)]);
        assert_eq!(p, vec![r(0), r(0)]);
        assert!(serial_posted_price(r(3), r(1), &s).is_err());
    }
}

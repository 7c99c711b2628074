use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Allocation, AuctionSetting, MechanismTree};
use crate::rational::Rational;
use crate::strategy::StrategyTable;
use crate::valuation::{bundle_index, Domain, Valuation};

use super::Context;

/// Brute-force welfare maximization over every allocation of a setting.
#[derive(Debug, Clone)]
pub struct WelfareOracle {
    allocations: Vec<Allocation>,
    /// `index[a][i]`: bundle index of player i in allocation a.
    index: Vec<Vec<usize>>,
}

impl WelfareOracle {
    pub fn new(setting: &AuctionSetting) -> Self {
        let allocations = setting.all_allocations();
        let index = allocations
            .iter()
            .map(|a| a.0.iter().map(bundle_index).collect())
            .collect();
        WelfareOracle { allocations, index }
    }

    pub fn allocations(&self) -> &[Allocation] {
        &self.allocations
    }

    /// Optimal welfare and the first maximizing allocation, given one value
    /// table per player (see [`crate::valuation::Valuation::value_table`]).
    pub fn optimum(&self, tables: &[&[Rational]]) -> (Rational, &Allocation) {
        let mut best = (Rational::ZERO, 0);
        for (a, idx) in self.index.iter().enumerate() {
            let w: Rational = idx.iter().zip(tables).map(|(&b, t)| t[b]).sum();
            if w > best.0 {
                best = (w, a);
            }
        }
        (best.0, &self.allocations[best.1])
    }
}

/// Maximum social welfare of a valuation profile, with one optimal allocation.
pub fn opt_welfare(
    profile: &[Valuation],
    setting: &AuctionSetting,
) -> Result<(Rational, Allocation)> {
    if profile.len() != setting.n {
        return Err(Error::InvalidParameter(format!(
            "{} valuations for {} players",
            profile.len(),
            setting.n
        )));
    }
    let tables = profile
        .iter()
        .map(|v| v.value_table(setting))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[Rational]> = tables.iter().map(Vec::as_slice).collect();
    let oracle = WelfareOracle::new(setting);
    let (w, a) = oracle.optimum(&refs);
    Ok((w, a.clone()))
}

/// An approximation ratio; `Unbounded` when positive welfare was achievable
/// but the mechanism realized none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ratio {
    Finite(Rational),
    Unbounded,
}

impl Ratio {
    /// `opt / achieved`, with 0/0 read as 1.
    pub fn of(opt: Rational, achieved: Rational) -> Ratio {
        if achieved.is_zero() {
            if opt.is_zero() {
                Ratio::Finite(Rational::ONE)
            } else {
                Ratio::Unbounded
            }
        } else {
            Ratio::Finite(opt / achieved)
        }
    }

    pub fn finite(&self) -> Option<Rational> {
        match self {
            Ratio::Finite(r) => Some(*r),
            Ratio::Unbounded => None,
        }
    }

    pub fn is_below(&self, target: Rational) -> bool {
        matches!(self, Ratio::Finite(r) if *r < target)
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Ratio::Finite(a), Ratio::Finite(b)) => a.cmp(b),
            (Ratio::Finite(_), Ratio::Unbounded) => Ordering::Less,
            (Ratio::Unbounded, Ratio::Finite(_)) => Ordering::Greater,
            (Ratio::Unbounded, Ratio::Unbounded) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(r) => write!(f, "{r}"),
            Ratio::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Worst-case ratio of optimal to realized welfare over a finite domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioReport {
    pub ratio: Ratio,
    /// Valuation labels of the first profile attaining the ratio.
    pub worst_profile: Vec<String>,
    pub mechanism_welfare: Rational,
    pub opt_welfare: Rational,
    pub opt_allocation: Allocation,
}

impl fmt::Display for RatioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RATIO {}  worst profile ({}): welfare {:?} vs optimum {:?} at {}",
            self.ratio,
            self.worst_profile.join(", "),
            self.mechanism_welfare,
            self.opt_welfare,
            self.opt_allocation
        )
    }
}

pub fn welfare_ratio(
    tree: &MechanismTree,
    strategies: &[StrategyTable],
    domain: &Domain,
) -> Result<RatioReport> {
    let ctx = Context::new(tree, strategies, domain)?;
    let tables = domain.value_tables();
    let oracle = WelfareOracle::new(domain.setting());
    let mut worst: Option<(Ratio, Vec<usize>, Rational, Rational, Allocation)> = None;
    for profile in domain.profiles() {
        let leaf = ctx.play(&profile).leaf;
        let (allocation, _) = tree.leaf_outcome(leaf).expect("leaf");
        let profile_tables: Vec<&[Rational]> = profile
            .iter()
            .enumerate()
            .map(|(i, &j)| tables[i][j].as_slice())
            .collect();
        let achieved: Rational = profile_tables
            .iter()
            .enumerate()
            .map(|(i, t)| t[bundle_index(allocation.bundle(i))])
            .sum();
        let (opt, opt_alloc) = oracle.optimum(&profile_tables);
        let ratio = Ratio::of(opt, achieved);
        if worst.as_ref().is_none_or(|w| ratio > w.0) {
            worst = Some((ratio, profile, achieved, opt, opt_alloc.clone()));
        }
    }
    let (ratio, profile, mechanism_welfare, opt_welfare, opt_allocation) =
        worst.expect("domains are nonempty");
    Ok(RatioReport {
        ratio,
        worst_profile: ctx.labels(&profile),
        mechanism_welfare,
        opt_welfare,
        opt_allocation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bundle;

    #[test]
    fn mu_opt_gives_all_units_to_the_all_bidder() {
        let s = AuctionSetting::multi_unit(2, 2).unwrap();
        let profile = [
            Valuation::single_minded_mu(2, 16),
            Valuation::single_minded_mu(1, 1),
        ];
        let (w, a) = opt_welfare(&profile, &s).unwrap();
        assert_eq!(w, Rational::integer(16));
        assert_eq!(a.0, vec![Bundle::Units(2), Bundle::Units(0)]);
    }

    #[test]
    fn zero_profile_has_zero_optimum() {
        let s = AuctionSetting::combinatorial(2, 2).unwrap();
        let profile = [Valuation::additive(&[0, 0]), Valuation::additive(&[0, 0])];
        assert_eq!(opt_welfare(&profile, &s).unwrap().0, Rational::ZERO);
    }

    #[test]
    fn ratio_conventions() {
        let r = Rational::integer;
        assert_eq!(Ratio::of(r(0), r(0)), Ratio::Finite(r(1)));
        assert_eq!(Ratio::of(r(3), r(0)), Ratio::Unbounded);
        assert_eq!(
            Ratio::of(r(3), r(2)),
            Ratio::Finite(Rational::new(3, 2).unwrap())
        );
        assert!(Ratio::Unbounded > Ratio::Finite(r(1000)));
        assert!(!Ratio::Unbounded.is_below(r(1000)));
        assert_eq!(Ratio::Unbounded.to_string(), "unbounded");
    }
}

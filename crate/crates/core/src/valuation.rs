//! Valuation families, finite domains and the adversarial fixture sets.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{full_mask, AuctionSetting, Bundle, SettingKind};
use crate::rational::Rational;

/// A value function over bundles (combinatorial) or quantities (multi-unit).
///
/// General tables are indexed by item bitmask, resp. by quantity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Valuation {
    Additive { values: Vec<Rational> },
    UnitDemand { values: Vec<Rational> },
    SingleMindedCa { bundle: Bundle, value: Rational },
    SingleMindedMu { quantity: u32, value: Rational },
    GeneralCa { table: Vec<Rational> },
    GeneralMu { table: Vec<Rational> },
}

impl Valuation {
    pub fn additive(values: &[i64]) -> Valuation {
        Valuation::Additive {
            values: values.iter().map(|&v| Rational::integer(v)).collect(),
        }
    }

    pub fn unit_demand(values: &[i64]) -> Valuation {
        Valuation::UnitDemand {
            values: values.iter().map(|&v| Rational::integer(v)).collect(),
        }
    }

    pub fn single_minded_ca(items: &[usize], value: i64) -> Valuation {
        Valuation::SingleMindedCa {
            bundle: Bundle::from_items(items),
            value: Rational::integer(value),
        }
    }

    pub fn single_minded_mu(quantity: u32, value: i64) -> Valuation {
        Valuation::SingleMindedMu {
            quantity,
            value: Rational::integer(value),
        }
    }

    pub fn kind(&self) -> SettingKind {
        match self {
            Valuation::SingleMindedMu { .. } | Valuation::GeneralMu { .. } => {
                SettingKind::MultiUnit
            }
            _ => SettingKind::Combinatorial,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Valuation::Additive { .. } => "additive",
            Valuation::UnitDemand { .. } => "unit-demand",
            Valuation::SingleMindedCa { .. } => "single-minded-ca",
            Valuation::SingleMindedMu { .. } => "single-minded-mu",
            Valuation::GeneralCa { .. } => "general-ca",
            Valuation::GeneralMu { .. } => "general-mu",
        }
    }

    /// Value of a bundle. Fails when the bundle kind does not match.
    pub fn evaluate(&self, bundle: &Bundle) -> Result<Rational> {
        match (self, *bundle) {
            (Valuation::Additive { values }, Bundle::Items(mask)) => {
                Ok(items_of(mask, values.len()).map(|i| values[i]).sum())
            }
            (Valuation::UnitDemand { values }, Bundle::Items(mask)) => {
                Ok(items_of(mask, values.len())
                    .map(|i| values[i])
                    .max()
                    .unwrap_or(Rational::ZERO))
            }
            (
                Valuation::SingleMindedCa {
                    bundle: target,
                    value,
                },
                b @ Bundle::Items(_),
            ) => Ok(if b.contains(target) {
                *value
            } else {
                Rational::ZERO
            }),
            (Valuation::GeneralCa { table }, Bundle::Items(mask)) => table
                .get(mask as usize)
                .copied()
                .ok_or_else(|| Error::InvalidValuation(format!("no table entry for {bundle}"))),
            (Valuation::SingleMindedMu { quantity, value }, Bundle::Units(q)) => {
                Ok(if q >= *quantity {
                    *value
                } else {
                    Rational::ZERO
                })
            }
            (Valuation::GeneralMu { table }, Bundle::Units(q)) => table
                .get(q as usize)
                .copied()
                .ok_or_else(|| Error::InvalidValuation(format!("no table entry for quantity {q}"))),
            _ => Err(Error::BundleMismatch),
        }
    }

    /// Values of every bundle of `setting`, indexed by [`bundle_index`].
    pub fn value_table(&self, setting: &AuctionSetting) -> Result<Vec<Rational>> {
        setting
            .all_bundles()
            .iter()
            .map(|b| self.evaluate(b))
            .collect()
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: Rational) -> Valuation {
        let scale = |v: &[Rational]| v.iter().map(|&x| x * factor).collect();
        match self {
            Valuation::Additive { values } => Valuation::Additive {
                values: scale(values),
            },
            Valuation::UnitDemand { values } => Valuation::UnitDemand {
                values: scale(values),
            },
            Valuation::SingleMindedCa { bundle, value } => Valuation::SingleMindedCa {
                bundle: *bundle,
                value: *value * factor,
            },
            Valuation::SingleMindedMu { quantity, value } => Valuation::SingleMindedMu {
                quantity: *quantity,
                value: *value * factor,
            },
            Valuation::GeneralCa { table } => Valuation::GeneralCa {
                table: scale(table),
            },
            Valuation::GeneralMu { table } => Valuation::GeneralMu {
                table: scale(table),
            },
        }
    }
}

fn items_of(mask: u64, len: usize) -> impl Iterator<Item = usize> {
    (0..len.min(64)).filter(move |i| mask & (1 << i) != 0)
}

/// Position of a bundle in [`AuctionSetting::all_bundles`].
pub fn bundle_index(bundle: &Bundle) -> usize {
    match *bundle {
        Bundle::Items(mask) => mask as usize,
        Bundle::Units(q) => q as usize,
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[Rational]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        match self {
            Valuation::Additive { values } => write!(f, "additive({})", list(values)),
            Valuation::UnitDemand { values } => write!(f, "unit-demand({})", list(values)),
            Valuation::SingleMindedCa { bundle, value } => {
                write!(f, "single-minded({bundle} -> {value:?})")
            }
            Valuation::SingleMindedMu { quantity, value } => {
                write!(f, "single-minded({quantity} units -> {value:?})")
            }
            Valuation::GeneralCa { table } => write!(f, "table[{}]", list(table)),
            Valuation::GeneralMu { table } => write!(f, "table[{}]", list(table)),
        }
    }
}

/// Validates a valuation against a setting: dimensions, non-negativity,
/// normalization and monotonicity.
pub fn make_valuation(valuation: Valuation, setting: &AuctionSetting) -> Result<Valuation> {
    let bad = |msg: String| Err(Error::InvalidValuation(msg));
    if valuation.kind() != setting.kind {
        return bad(format!(
            "{} valuation in a {} setting",
            valuation.tag(),
            setting.kind
        ));
    }
    match &valuation {
        Valuation::Additive { values } | Valuation::UnitDemand { values } => {
            if values.len() != setting.m {
                return bad(format!(
                    "{} item values for {} items",
                    values.len(),
                    setting.m
                ));
            }
            if values.iter().any(Rational::is_negative) {
                return bad("negative item value".into());
            }
        }
        Valuation::SingleMindedCa { bundle, value } => {
            bundle.validate(setting).map_err(Error::InvalidValuation)?;
            if value.is_negative() {
                return bad("negative value".into());
            }
            if bundle.is_empty() && !value.is_zero() {
                return bad("empty target bundle with nonzero value is not normalized".into());
            }
        }
        Valuation::SingleMindedMu { quantity, value } => {
            if *quantity as usize > setting.m {
                return bad(format!(
                    "target quantity {quantity} exceeds {} units",
                    setting.m
                ));
            }
            if value.is_negative() {
                return bad("negative value".into());
            }
            if *quantity == 0 && !value.is_zero() {
                return bad("zero target quantity with nonzero value is not normalized".into());
            }
        }
        Valuation::GeneralCa { table } => {
            let expected = full_mask(setting.m) as usize + 1;
            if table.len() != expected {
                return bad(format!(
                    "table has {} entries, expected {expected}",
                    table.len()
                ));
            }
            check_table(table, |mask| {
                (0..setting.m)
                    .filter(|i| mask & (1 << i) == 0)
                    .map(|i| mask | (1 << i))
                    .collect()
            })?;
        }
        Valuation::GeneralMu { table } => {
            if table.len() != setting.m + 1 {
                return bad(format!(
                    "table has {} entries, expected {}",
                    table.len(),
                    setting.m + 1
                ));
            }
            check_table(table, |q| if q < setting.m { vec![q + 1] } else { vec![] })?;
        }
    }
    Ok(valuation)
}

fn check_table<F: Fn(usize) -> Vec<usize>>(table: &[Rational], successors: F) -> Result<()> {
    if !table[0].is_zero() {
        return Err(Error::InvalidValuation(
            "not normalized: value of the empty bundle must be 0".into(),
        ));
    }
    for (i, v) in table.iter().enumerate() {
        if v.is_negative() {
            return Err(Error::InvalidValuation(format!(
                "negative value at entry {i}"
            )));
        }
        for j in successors(i) {
            if table[j] < *v {
                return Err(Error::InvalidValuation(format!(
                    "not monotone: entry {j} is worth less than its subset {i}"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledValuation {
    pub label: String,
    pub valuation: Valuation,
}

/// One finite list of labeled valuations per player.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct Domain {
    setting: AuctionSetting,
    players: Vec<Vec<LabeledValuation>>,
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    setting: AuctionSetting,
    players: Vec<Vec<LabeledValuation>>,
}

impl TryFrom<RawDomain> for Domain {
    type Error = Error;
    fn try_from(raw: RawDomain) -> Result<Self> {
        Domain::new(raw.setting, raw.players)
    }
}

impl From<Domain> for RawDomain {
    fn from(d: Domain) -> Self {
        RawDomain {
            setting: d.setting,
            players: d.players,
        }
    }
}

impl Domain {
    pub fn new(setting: AuctionSetting, players: Vec<Vec<LabeledValuation>>) -> Result<Self> {
        if players.len() != setting.n {
            return Err(Error::InvalidDomain(format!(
                "{} valuation lists for {} players",
                players.len(),
                setting.n
            )));
        }
        let mut checked = Vec::with_capacity(players.len());
        for (i, list) in players.into_iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidDomain(format!(
                    "player {i} has no valuations"
                )));
            }
            let mut labels = HashSet::new();
            let mut out = Vec::with_capacity(list.len());
            for lv in list {
                if !labels.insert(lv.label.clone()) {
                    return Err(Error::InvalidDomain(format!(
                        "player {i} has two valuations labeled {:?}",
                        lv.label
                    )));
                }
                let valuation = make_valuation(lv.valuation, &setting)
                    .map_err(|e| e.context(format!("player {i}, valuation {:?}", lv.label)))?;
                out.push(LabeledValuation {
                    label: lv.label,
                    valuation,
                });
            }
            checked.push(out);
        }
        Ok(Domain {
            setting,
            players: checked,
        })
    }

    /// Builds a domain labeling each valuation `v0`, `v1`, ...
    pub fn unlabeled(setting: AuctionSetting, players: Vec<Vec<Valuation>>) -> Result<Self> {
        let players = players
            .into_iter()
            .map(|list| {
                list.into_iter()
                    .enumerate()
                    .map(|(j, valuation)| LabeledValuation {
                        label: format!("v{j}"),
                        valuation,
                    })
                    .collect()
            })
            .collect();
        Self::new(setting, players)
    }

    pub fn setting(&self) -> &AuctionSetting {
        &self.setting
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn player(&self, i: usize) -> &[LabeledValuation] {
        &self.players[i]
    }

    pub fn players(&self) -> &[Vec<LabeledValuation>] {
        &self.players
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.players.iter().map(Vec::len).collect()
    }

    /// Number of profiles in the domain product.
    pub fn profile_count(&self) -> usize {
        self.players.iter().map(Vec::len).product()
    }

    pub fn find(&self, player: usize, label: &str) -> Option<usize> {
        self.players
            .get(player)?
            .iter()
            .position(|lv| lv.label == label)
    }

    pub fn valuation(&self, player: usize, index: usize) -> &Valuation {
        &self.players[player][index].valuation
    }

    pub fn label(&self, player: usize, index: usize) -> &str {
        &self.players[player][index].label
    }

    /// Profiles as index vectors, player 0 most significant.
    pub fn profiles(&self) -> ProfileIter {
        ProfileIter::new(self.sizes())
    }

    /// Restricts every player to the given valuation indices.
    pub fn restrict(&self, subsets: &[Vec<usize>]) -> Result<Domain> {
        if subsets.len() != self.n() {
            return Err(Error::InvalidDomain(
                "one subset per player required".into(),
            ));
        }
        let players = subsets
            .iter()
            .enumerate()
            .map(|(i, idx)| {
                idx.iter()
                    .map(|&j| {
                        self.players[i].get(j).cloned().ok_or_else(|| {
                            Error::InvalidDomain(format!("player {i} has no valuation #{j}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Domain::new(self.setting, players)
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: Rational) -> Domain {
        Domain {
            setting: self.setting,
            players: self
                .players
                .iter()
                .map(|list| {
                    list.iter()
                        .map(|lv| LabeledValuation {
                            label: lv.label.clone(),
                            valuation: lv.valuation.scaled(factor),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Per player, per valuation, the value of every bundle (see [`bundle_index`]).
    pub fn value_tables(&self) -> Vec<Vec<Vec<Rational>>> {
        self.players
            .iter()
            .map(|list| {
                list.iter()
                    .map(|lv| {
                        lv.valuation
                            .value_table(&self.setting)
                            .expect("domain valuations match the setting")
                    })
                    .collect()
            })
            .collect()
    }
}

/// Odometer over index vectors, last coordinate fastest.
#[derive(Debug, Clone)]
pub struct ProfileIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl ProfileIter {
    pub fn new(sizes: Vec<usize>) -> Self {
        let next = if sizes.iter().all(|&s| s > 0) {
            Some(vec![0; sizes.len()])
        } else {
            None
        };
        ProfileIter { sizes, next }
    }
}

impl Iterator for ProfileIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] < self.sizes[pos] {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(current)
    }
}

/// The adversarial valuation sets used by the impossibility arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialFamily {
    MuSingleMinded,
    CaSingleMinded,
    Additive,
    UnitDemand,
}

impl AdversarialFamily {
    pub const ALL: [AdversarialFamily; 4] = [
        AdversarialFamily::MuSingleMinded,
        AdversarialFamily::CaSingleMinded,
        AdversarialFamily::Additive,
        AdversarialFamily::UnitDemand,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AdversarialFamily::MuSingleMinded => "mu-single-minded",
            AdversarialFamily::CaSingleMinded => "ca-single-minded",
            AdversarialFamily::Additive => "additive",
            AdversarialFamily::UnitDemand => "unit-demand",
        }
    }
}

impl std::str::FromStr for AdversarialFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AdversarialFamily::ALL
            .into_iter()
            .find(|f| f.name() == s || (s == "mu" && *f == AdversarialFamily::MuSingleMinded))
            .ok_or_else(|| Error::Parse(format!("unknown valuation family {s:?}")))
    }
}

/// The adversarial domain with the two distinguished roles played by players 0 and 1.
pub fn adversarial_domain(setting: &AuctionSetting, family: AdversarialFamily) -> Result<Domain> {
    let order: Vec<usize> = (0..setting.n).collect();
    adversarial_domain_with_roles(setting, family, &order)
}

/// `order[r]` is the player who takes role `r` (roles 0 and 1 carry the rich sets).
pub fn adversarial_domain_with_roles(
    setting: &AuctionSetting,
    family: AdversarialFamily,
    order: &[usize],
) -> Result<Domain> {
    if setting.m < 2 || setting.n < 2 {
        return Err(Error::InvalidParameter(
            "adversarial domains need m >= 2 and n >= 2".into(),
        ));
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..setting.n).collect::<Vec<_>>() {
        return Err(Error::InvalidParameter(
            "role order must be a permutation of the players".into(),
        ));
    }
    let expected_kind = match family {
        AdversarialFamily::MuSingleMinded => SettingKind::MultiUnit,
        _ => SettingKind::Combinatorial,
    };
    if setting.kind != expected_kind {
        return Err(Error::InvalidParameter(format!(
            "{} fixtures need a {expected_kind} setting",
            family.name()
        )));
    }

    let k = setting.k();
    let m = setting.m;
    let k2 = k * k;
    let k4 = k2 * k2;
    let lv = |label: String, valuation: Valuation| LabeledValuation { label, valuation };
    // role r (0-based) values item e_{min(r, m-1)} in its "one" valuation
    let one_item = |r: usize| r.min(m - 1);

    let mut by_role: Vec<Vec<LabeledValuation>> = Vec::with_capacity(setting.n);
    for r in 0..setting.n {
        let list = match family {
            AdversarialFamily::MuSingleMinded => {
                let one = lv("one".into(), Valuation::single_minded_mu(1, 1));
                if r < 2 {
                    vec![
                        one,
                        lv("ONE".into(), Valuation::single_minded_mu(1, k2 + 1)),
                        lv("all".into(), Valuation::single_minded_mu(m as u32, k4)),
                    ]
                } else {
                    vec![one]
                }
            }
            AdversarialFamily::CaSingleMinded => {
                let one = lv("one".into(), Valuation::single_minded_ca(&[one_item(r)], 1));
                if r < 2 {
                    let all: Vec<usize> = (0..m).collect();
                    vec![
                        one,
                        lv("ONE".into(), Valuation::single_minded_ca(&[r], k2 + 1)),
                        lv("all".into(), Valuation::single_minded_ca(&all, k4)),
                    ]
                } else {
                    vec![one]
                }
            }
            AdversarialFamily::Additive | AdversarialFamily::UnitDemand => {
                let make = |vals: Vec<i64>| {
                    if family == AdversarialFamily::Additive {
                        Valuation::additive(&vals)
                    } else {
                        Valuation::unit_demand(&vals)
                    }
                };
                let single = |item: usize, value: i64| {
                    let mut vals = vec![0; m];
                    vals[item] = value;
                    make(vals)
                };
                let item = one_item(r);
                let one = lv(format!("e{}-one", r + 1), single(item, 1));
                if r < 2 {
                    // role 0 prefers e1 in "both", role 1 prefers e2
                    let (own, other) = (r, 1 - r);
                    let mut both = vec![0; m];
                    both[own] = 2 * k2 + 2;
                    both[other] = 2 * k2;
                    vec![
                        one,
                        lv(format!("e{}-big", own + 1), single(own, 3 * k4)),
                        lv(format!("e{}-big", other + 1), single(other, 3 * k4)),
                        lv("both".into(), make(both)),
                    ]
                } else {
                    vec![one]
                }
            }
        };
        by_role.push(list);
    }

    let mut players = vec![Vec::new(); setting.n];
    for (r, list) in by_role.into_iter().enumerate() {
        players[order[r]] = list;
    }
    Domain::new(*setting, players)
}

/// All additive valuations with each item worth 0, `x_l` or `x_h`.
pub fn restricted_additive_domain(
    x_l: Rational,
    x_h: Rational,
    setting: &AuctionSetting,
) -> Result<Domain> {
    if !x_l.is_positive() || x_l >= x_h {
        return Err(Error::InvalidParameter(format!(
            "need 0 < x_l < x_h, got x_l = {x_l}, x_h = {x_h}"
        )));
    }
    if setting.kind != SettingKind::Combinatorial {
        return Err(Error::InvalidParameter(
            "restricted additive domains need a combinatorial setting".into(),
        ));
    }
    let levels = [Rational::ZERO, x_l, x_h];
    let count = 3usize.pow(setting.m as u32);
    let list: Vec<LabeledValuation> = (0..count)
        .map(|code| {
            let mut c = code;
            let values: Vec<Rational> = (0..setting.m)
                .map(|_| {
                    let v = levels[c % 3];
                    c /= 3;
                    v
                })
                .collect();
            let label = values
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(",");
            LabeledValuation {
                label,
                valuation: Valuation::Additive { values },
            }
        })
        .collect();
    Domain::new(*setting, vec![list; setting.n])
}

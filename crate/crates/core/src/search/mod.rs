//! Bounded exhaustive search over normalized mechanisms.
//!
//! A normalized mechanism asks, at each internal node, one player to reveal
//! which block of a partition of her still-consistent valuations holds her
//! true valuation; strategies are block membership. Leaves carry any
//! allocation and per-player payments drawn from a finite grid. The search
//! looks for such a mechanism that is OSP, IR and NNT and whose welfare ratio
//! is strictly below a target.

mod engine;
mod partition;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::checks::{Property, RatioReport};
use crate::error::{Error, Result};
use crate::mechanisms::{MechanismBundle, Preorder};
use crate::model::{label_order, AuctionSetting, Behavior};
use crate::rational::Rational;
use crate::strategy::StrategyTable;
use crate::valuation::{AdversarialFamily, Domain};

use engine::{Engine, LeafFilter, PKind, PNode, Prepared, Step};

pub use partition::proper_partitions;

/// Environment variable holding the worker count for parallel searches.
pub const WORKERS_ENV: &str = "OSPCHECK_WORKERS";

/// Caveat attached to every search verdict.
pub const GRID_CAVEAT: &str = "payments range over a finite grid and trees are normalized \
(block-membership strategies); a verdict covers exactly this class and is not a proof \
about all mechanisms";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    domain: Domain,
    grid: Vec<Rational>,
    max_depth: usize,
}

impl SearchSpace {
    /// Sorts and deduplicates the grid. The depth defaults to the total
    /// number of valuations, which is enough to separate every profile.
    pub fn new(domain: Domain, grid: &[Rational], max_depth: Option<usize>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidSearchSpace("payment grid is empty".into()));
        }
        let mut grid = grid.to_vec();
        grid.sort();
        grid.dedup();
        let max_depth = max_depth.unwrap_or_else(|| domain.sizes().iter().sum());
        Ok(SearchSpace {
            domain,
            grid,
            max_depth,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn grid(&self) -> &[Rational] {
        &self.grid
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Human-readable description of the searched class.
    pub fn class_description(&self) -> String {
        let s = self.domain.setting();
        let grid: Vec<String> = self.grid.iter().map(|g| g.to_string()).collect();
        format!(
            "normalized mechanisms for {} (n={}, m={}) over {} profiles, payments in {{{}}}, \
             at most {} nested splits",
            kind_name(s),
            s.n,
            s.m,
            self.domain.profile_count(),
            grid.join(", "),
            self.max_depth
        )
    }

    fn prepare(&self, filter: LeafFilter) -> Result<Prepared> {
        Prepared::new(&self.domain, &self.grid, self.max_depth, filter)
    }
}

fn kind_name(s: &AuctionSetting) -> &'static str {
    match s.kind {
        crate::model::SettingKind::Combinatorial => "combinatorial auctions",
        crate::model::SettingKind::MultiUnit => "multi-unit auctions",
    }
}

/// Payment thresholds where the incentive constraints of the adversarial
/// domains bind, plus the small integers 0..=5.
pub fn default_grid(setting: &AuctionSetting, family: AdversarialFamily) -> Vec<Rational> {
    let k = setting.k();
    let mut grid: Vec<i64> = (0..=5).collect();
    grid.extend([k * k, k * k + 1, k.pow(4)]);
    if matches!(
        family,
        AdversarialFamily::Additive | AdversarialFamily::UnitDemand
    ) {
        grid.extend([2 * k * k, 2 * k * k + 2, 2 * k.pow(3) + k * k]);
    }
    grid.sort();
    grid.dedup();
    grid.into_iter().map(Rational::integer).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOptions {
    /// Reject partial trees as soon as two labeled leaves conflict; when off,
    /// only complete trees are checked.
    pub pruning: bool,
    /// Worker threads; `None` reads the environment, then uses all cores.
    pub workers: Option<usize>,
    pub budget: Option<Duration>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            pruning: true,
            workers: None,
            budget: None,
        }
    }
}

impl SearchOptions {
    fn worker_count(&self) -> usize {
        self.workers
            .or_else(|| std::env::var(WORKERS_ENV).ok()?.parse().ok())
            .unwrap_or_else(rayon::current_num_threads)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    NoCounterexample,
    Counterexample {
        bundle: Box<MechanismBundle>,
        ratio: RatioReport,
        /// The general checkers confirm OSP, IR, NNT and the ratio.
        reverified: bool,
    },
    BudgetExhausted,
}

impl SearchOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            SearchOutcome::NoCounterexample => "no-counterexample",
            SearchOutcome::Counterexample { .. } => "counterexample",
            SearchOutcome::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchVerdict {
    pub outcome: SearchOutcome,
    /// Complete trees reached in enumeration order up to the verdict.
    pub examined: u64,
    /// Leaf labelings and splits tried, pruned ones included.
    pub decisions: u64,
    pub elapsed: Duration,
    pub target_ratio: Rational,
    pub pruning: bool,
    pub class: String,
    pub caveat: String,
}

impl std::fmt::Display for SearchVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SEARCH {} target<{} examined={} decisions={} elapsed={:.3}s",
            self.outcome.name(),
            self.target_ratio,
            self.examined,
            self.decisions,
            self.elapsed.as_secs_f64()
        )?;
        if let SearchOutcome::Counterexample {
            ratio, reverified, ..
        } = &self.outcome
        {
            write!(f, " ratio={} reverified={}", ratio.ratio, reverified)?;
        }
        Ok(())
    }
}

enum TaskEnd {
    Found(Result<MechanismBundle>),
    Exhausted,
    Interrupted,
}

struct TaskResult {
    end: TaskEnd,
    trees: u64,
    decisions: u64,
}

/// Searches for an OSP, IR and NNT normalized mechanism whose welfare ratio
/// is strictly below `target_ratio`. The reported counterexample is the
/// first in enumeration order, whatever the worker count.
pub fn falsify_impossibility(
    space: &SearchSpace,
    target_ratio: Rational,
    options: &SearchOptions,
) -> Result<SearchVerdict> {
    if target_ratio <= Rational::ONE {
        return Err(Error::InvalidParameter(format!(
            "target ratio must exceed 1, got {target_ratio}"
        )));
    }
    let start = Instant::now();
    let deadline = options.budget.map(|b| start + b);
    let prep = Arc::new(space.prepare(LeafFilter::Feasible(Some((
        target_ratio.numer(),
        target_ratio.denom(),
    ))))?);
    let roots = Engine::new(prep.clone(), options.pruning, None).root_options();
    let found = AtomicUsize::new(usize::MAX);

    let task = |k: usize| -> TaskResult {
        let mut engine = Engine::new(prep.clone(), options.pruning, Some(k));
        let stop =
            || deadline.is_some_and(|d| Instant::now() >= d) || found.load(Ordering::Relaxed) < k;
        let end = match engine.next_tree(&stop) {
            Step::Complete => {
                found.fetch_min(k, Ordering::Relaxed);
                TaskEnd::Found(to_bundle(&prep, &space.domain, engine.nodes()))
            }
            Step::Exhausted => TaskEnd::Exhausted,
            Step::Interrupted => TaskEnd::Interrupted,
        };
        TaskResult {
            end,
            trees: engine.trees,
            decisions: engine.visited,
        }
    };

    let workers = options.worker_count();
    let results: Vec<TaskResult> = if workers == 1 {
        let mut out = Vec::with_capacity(roots);
        for k in 0..roots {
            let r = task(k);
            let stop = !matches!(r.end, TaskEnd::Exhausted);
            out.push(r);
            if stop {
                break;
            }
        }
        out
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
        pool.install(|| (0..roots).into_par_iter().map(task).collect())
    };

    let mut examined = 0;
    let mut decisions = 0;
    let mut outcome = SearchOutcome::NoCounterexample;
    for r in results {
        examined += r.trees;
        decisions += r.decisions;
        match r.end {
            TaskEnd::Exhausted => continue,
            TaskEnd::Interrupted => outcome = SearchOutcome::BudgetExhausted,
            TaskEnd::Found(bundle) => {
                let bundle = bundle?;
                let ratio = bundle.welfare_ratio()?;
                let reverified = bundle
                    .check_all(&[Property::Osp, Property::Ir, Property::Nnt])?
                    .iter()
                    .all(|v| v.pass)
                    && ratio.ratio.is_below(target_ratio);
                outcome = SearchOutcome::Counterexample {
                    bundle: Box::new(bundle),
                    ratio,
                    reverified,
                };
            }
        }
        break;
    }
    Ok(SearchVerdict {
        outcome,
        examined,
        decisions,
        elapsed: start.elapsed(),
        target_ratio,
        pruning: options.pruning,
        class: space.class_description(),
        caveat: GRID_CAVEAT.to_string(),
    })
}

/// The first `cap` OSP, IR and NNT mechanisms in enumeration order, keeping
/// only those with ratio strictly below `target_ratio` when one is given.
/// The flag reports whether the class was exhausted.
pub fn survivors(
    space: &SearchSpace,
    target_ratio: Option<Rational>,
    cap: usize,
) -> Result<(Vec<MechanismBundle>, bool)> {
    let prep = Arc::new(space.prepare(LeafFilter::Feasible(
        target_ratio.map(|t| (t.numer(), t.denom())),
    ))?);
    let mut engine = Engine::new(prep.clone(), true, None);
    let mut out = Vec::new();
    while out.len() < cap {
        match engine.next_tree(&|| false) {
            Step::Complete => out.push(to_bundle(&prep, &space.domain, engine.nodes())?),
            _ => return Ok((out, true)),
        }
    }
    let exhausted = engine.next_tree(&|| false) != Step::Complete;
    Ok((out, exhausted))
}

/// Every normalized mechanism of the space, in deterministic order.
pub fn enumerate_normalized_mechanisms(space: &SearchSpace) -> Result<MechanismStream> {
    let prep = Arc::new(space.prepare(LeafFilter::Any)?);
    Ok(MechanismStream {
        engine: Engine::new(prep.clone(), false, None),
        prep,
        domain: space.domain.clone(),
    })
}

pub struct MechanismStream {
    engine: Engine,
    prep: Arc<Prepared>,
    domain: Domain,
}

impl Iterator for MechanismStream {
    type Item = Result<MechanismBundle>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.engine.next_tree(&|| false) {
            Step::Complete => Some(to_bundle(&self.prep, &self.domain, self.engine.nodes())),
            _ => None,
        }
    }
}

/// Info kept per emitted node: the speaker's blocks in edge order.
type Blocks = Option<Vec<u16>>;

fn to_bundle(prep: &Prepared, domain: &Domain, nodes: &[PNode]) -> Result<MechanismBundle> {
    fn emit(
        prep: &Prepared,
        domain: &Domain,
        nodes: &[PNode],
        id: u32,
        out: &mut Preorder<Blocks>,
    ) -> usize {
        match &nodes[id as usize].kind {
            PKind::Leaf(l) => {
                let (a, pays) = &prep.labels[*l as usize];
                let payments = pays.iter().map(|&g| prep.grid[g as usize]).collect();
                out.leaf(prep.allocations[*a as usize].clone(), payments, None)
            }
            PKind::Split {
                speaker,
                blocks,
                children,
            } => {
                let i = *speaker as usize;
                let mut order: Vec<(String, u16, u32)> = blocks
                    .iter()
                    .zip(children)
                    .map(|(&b, &c)| {
                        let label: Vec<&str> = (0..16)
                            .filter(|v| b & (1 << v) != 0)
                            .map(|v| domain.label(i, v))
                            .collect();
                        (label.join("+"), b, c)
                    })
                    .collect();
                order.sort_by(|x, y| label_order(&x.0, &y.0));
                let node = out.open(i, Some(order.iter().map(|o| o.1).collect()));
                for (label, _, child) in order {
                    let c = emit(prep, domain, nodes, child, out);
                    out.edge(node, label, c);
                }
                node
            }
        }
    }

    let mut pre = Preorder::new();
    emit(prep, domain, nodes, 0, &mut pre);
    let (tree, info) = pre.finish(*domain.setting())?;
    let strategies = (0..domain.n())
        .map(|i| {
            StrategyTable::from_domain(domain, i, |j| {
                Behavior::from_fn(&tree, i, |node| {
                    info[node]
                        .as_ref()
                        .and_then(|b| b.iter().position(|b| b & (1 << j) != 0))
                        .unwrap_or(0)
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MechanismBundle {
        tree,
        strategies,
        domain: domain.clone(),
    })
}

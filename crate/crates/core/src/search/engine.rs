//! Depth-first construction of normalized mechanisms, one slot at a time.
//!
//! A partial tree is a list of nodes in creation order plus a stack of
//! pending slots (subtrees still to be decided). Each slot has a rectangle of
//! consistent valuations, one bitmask per player. Deciding a slot means
//! either labeling it as a leaf (allocation and payments) or splitting one
//! player's mask into blocks, which opens one new slot per block.
//!
//! In a normalized tree a profile reaches the unique leaf whose rectangle
//! contains it, so IR, NNT and the welfare ratio are properties of single
//! leaves. Obvious dominance is a property of leaf pairs: for leaves whose
//! lowest common ancestor is a node of player i, every valuation of i
//! consistent with one leaf must weakly prefer that leaf to the other.

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::model::Allocation;
use crate::rational::Rational;
use crate::valuation::{bundle_index, Domain};

use super::partition::proper_partitions;

pub(crate) type Rect = u64;
/// Every partition of a valuation mask into at least two canonical blocks.
type Partitions = Vec<Rc<[u16]>>;

pub(crate) fn rect_mask(rect: Rect, player: usize) -> u16 {
    (rect >> (16 * player)) as u16
}

fn rect_with(rect: Rect, player: usize, mask: u16) -> Rect {
    (rect & !(0xffff << (16 * player))) | ((mask as u64) << (16 * player))
}

/// Which leaf labels a search may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LeafFilter {
    /// Every label, for plain enumeration.
    Any,
    /// NNT and IR for every consistent valuation, plus the strict ratio bound
    /// `opt * den < num * welfare` on every consistent profile when given.
    Feasible(Option<(i64, i64)>),
}

/// Label-independent data shared by every engine over one search space.
pub(crate) struct Prepared {
    pub n: usize,
    pub sizes: Vec<usize>,
    strides: Vec<usize>,
    pub allocations: Vec<Allocation>,
    pub grid: Vec<Rational>,
    /// (allocation index, grid index per player)
    pub labels: Vec<(u16, Vec<u8>)>,
    /// `util[i][v][label]`, scaled to integers.
    pub util: Vec<Vec<Vec<i64>>>,
    /// `welfare[alloc][profile]`, scaled to integers.
    welfare: Vec<Vec<i64>>,
    opt: Vec<i64>,
    pub filter: LeafFilter,
    pub max_depth: usize,
}

fn lcm(a: i64, b: i64) -> i64 {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Upper bound on the number of leaf labels an engine will handle.
pub(crate) const MAX_LABELS: usize = 1 << 20;

impl Prepared {
    pub fn new(
        domain: &Domain,
        grid: &[Rational],
        max_depth: usize,
        filter: LeafFilter,
    ) -> Result<Self> {
        let setting = domain.setting();
        let n = domain.n();
        if n > 4 {
            return Err(Error::InvalidSearchSpace(
                "at most 4 players supported".into(),
            ));
        }
        let sizes = domain.sizes();
        if sizes.iter().any(|&s| s > 16) {
            return Err(Error::InvalidSearchSpace(
                "at most 16 valuations per player supported".into(),
            ));
        }
        if grid.len() > 255 {
            return Err(Error::InvalidSearchSpace("payment grid too large".into()));
        }
        let allocations = setting.all_allocations();
        let label_count = (grid.len() as f64).powi(n as i32) * allocations.len() as f64;
        if label_count > MAX_LABELS as f64 {
            return Err(Error::InvalidSearchSpace(format!(
                "{label_count} leaf labels exceed the supported {MAX_LABELS}"
            )));
        }

        let tables = domain.value_tables();
        let mut scale = 1i64;
        for r in grid.iter().chain(tables.iter().flatten().flatten()) {
            scale = lcm(scale, r.denom());
        }
        let int = |r: Rational| -> Result<i64> {
            (r * Rational::integer(scale))
                .numer()
                .to_i64()
                .ok_or_else(|| Error::InvalidSearchSpace("values too large".into()))
        };
        let grid_int: Vec<i64> = grid.iter().map(|&g| int(g)).collect::<Result<_>>()?;

        // value[i][v][alloc]
        let value: Vec<Vec<Vec<i64>>> = (0..n)
            .map(|i| {
                tables[i]
                    .iter()
                    .map(|t| {
                        allocations
                            .iter()
                            .map(|a| int(t[bundle_index(a.bundle(i))]))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let mut labels = Vec::new();
        for a in 0..allocations.len() {
            let mut pays = vec![0u8; n];
            loop {
                labels.push((a as u16, pays.clone()));
                let mut pos = n;
                let mut carried = true;
                while pos > 0 && carried {
                    pos -= 1;
                    pays[pos] += 1;
                    if (pays[pos] as usize) < grid.len() {
                        carried = false;
                    } else {
                        pays[pos] = 0;
                    }
                }
                if carried {
                    break;
                }
            }
        }

        let util = (0..n)
            .map(|i| {
                value[i]
                    .iter()
                    .map(|per_alloc| {
                        labels
                            .iter()
                            .map(|(a, p)| per_alloc[*a as usize] - grid_int[p[i] as usize])
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let profiles: Vec<Vec<usize>> = domain.profiles().collect();
        let welfare: Vec<Vec<i64>> = (0..allocations.len())
            .map(|a| {
                profiles
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &v)| value[i][v][a]).sum())
                    .collect()
            })
            .collect();
        let opt: Vec<i64> = (0..profiles.len())
            .map(|p| welfare.iter().map(|w| w[p]).max().unwrap_or(0))
            .collect();

        Ok(Prepared {
            n,
            sizes,
            strides,
            allocations,
            grid: grid.to_vec(),
            labels,
            util,
            welfare,
            opt,
            filter,
            max_depth,
        })
    }

    pub fn full_rect(&self) -> Rect {
        (0..self.n).fold(0, |r, i| {
            rect_with(r, i, ((1u32 << self.sizes[i]) - 1) as u16)
        })
    }

    fn profiles_in(&self, rect: Rect) -> Vec<usize> {
        let mut out = vec![0usize];
        for i in 0..self.n {
            let mask = rect_mask(rect, i);
            out = out
                .iter()
                .flat_map(|&base| {
                    (0..16)
                        .filter(move |v| mask & (1 << v) != 0)
                        .map(move |v| base + v * self.strides[i])
                })
                .collect();
        }
        out
    }

    /// Labels allowed at a leaf with this rectangle, in label order.
    fn leaf_labels(&self, rect: Rect) -> Vec<u32> {
        let target = match self.filter {
            LeafFilter::Any => return (0..self.labels.len() as u32).collect(),
            LeafFilter::Feasible(t) => t,
        };
        let profiles = self.profiles_in(rect);
        let ratio_ok: Vec<bool> = (0..self.allocations.len())
            .map(|a| {
                let Some((num, den)) = target else {
                    return true;
                };
                profiles.iter().all(|&p| {
                    let opt = self.opt[p] as i128;
                    opt == 0 || opt * (den as i128) < (num as i128) * (self.welfare[a][p] as i128)
                })
            })
            .collect();
        (0..self.labels.len() as u32)
            .filter(|&l| {
                let (a, pays) = &self.labels[l as usize];
                ratio_ok[*a as usize]
                    && pays.iter().all(|&g| !self.grid[g as usize].is_negative())
                    && (0..self.n).all(|i| {
                        let mask = rect_mask(rect, i);
                        (0..self.sizes[i])
                            .filter(|v| mask & (1 << v) != 0)
                            .all(|v| self.util[i][v][l as usize] >= 0)
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Opt {
    Leaf(u32),
    Split { speaker: u8, partition: u32 },
}

#[derive(Debug, Clone)]
pub(crate) enum PKind {
    Leaf(u32),
    Split {
        speaker: u8,
        blocks: Rc<[u16]>,
        children: Vec<u32>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct PNode {
    pub rect: Rect,
    /// (ancestor, child index taken) from the root down.
    pub path: Rc<[(u32, u8)]>,
    pub kind: PKind,
}

#[derive(Debug, Clone)]
struct Slot {
    rect: Rect,
    depth: usize,
    parent: Option<(u32, u8)>,
    path: Rc<[(u32, u8)]>,
}

struct Frame {
    slot: Slot,
    options: Rc<[Opt]>,
    next: usize,
    nodes_len: usize,
    pending_len: usize,
    leaves_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Step {
    Complete,
    Exhausted,
    Interrupted,
}

pub(crate) struct Engine {
    p: Arc<Prepared>,
    /// Check leaf pairs as soon as a leaf is labeled; otherwise only
    /// complete trees are checked, vertex by vertex.
    pruning: bool,
    nodes: Vec<PNode>,
    pending: Vec<Slot>,
    frames: Vec<Frame>,
    leaves: Vec<u32>,
    root_choice: Option<usize>,
    started: bool,
    done: bool,
    label_cache: HashMap<Rect, Rc<[u32]>>,
    partition_cache: HashMap<(usize, u16), Rc<Partitions>>,
    option_cache: HashMap<(Rect, bool), Rc<[Opt]>>,
    completable_cache: HashMap<(Rect, usize), bool>,
    /// Decisions applied so far (leaf labels and splits).
    pub visited: u64,
    /// Complete trees reached, before any whole-tree check.
    pub trees: u64,
}

impl Engine {
    pub fn new(p: Arc<Prepared>, pruning: bool, root_choice: Option<usize>) -> Self {
        Engine {
            p,
            pruning,
            nodes: Vec::new(),
            pending: Vec::new(),
            frames: Vec::new(),
            leaves: Vec::new(),
            root_choice,
            started: false,
            done: false,
            label_cache: HashMap::new(),
            partition_cache: HashMap::new(),
            option_cache: HashMap::new(),
            completable_cache: HashMap::new(),
            visited: 0,
            trees: 0,
        }
    }

    pub fn nodes(&self) -> &[PNode] {
        &self.nodes
    }

    /// Number of decisions available at the root.
    pub fn root_options(&mut self) -> usize {
        let rect = self.p.full_rect();
        self.options(rect, 0).len()
    }

    fn labels(&mut self, rect: Rect) -> Rc<[u32]> {
        if let Some(l) = self.label_cache.get(&rect) {
            return l.clone();
        }
        let l: Rc<[u32]> = self.p.leaf_labels(rect).into();
        self.label_cache.insert(rect, l.clone());
        l
    }

    fn partitions(&mut self, player: usize, mask: u16) -> Rc<Vec<Rc<[u16]>>> {
        self.partition_cache
            .entry((player, mask))
            .or_insert_with(|| Rc::new(proper_partitions(mask).into_iter().map(Rc::from).collect()))
            .clone()
    }

    fn options(&mut self, rect: Rect, depth: usize) -> Rc<[Opt]> {
        let can_split = depth < self.p.max_depth;
        if let Some(o) = self.option_cache.get(&(rect, can_split)) {
            return o.clone();
        }
        let mut opts: Vec<Opt> = self.labels(rect).iter().map(|&l| Opt::Leaf(l)).collect();
        if can_split {
            for i in 0..self.p.n {
                let mask = rect_mask(rect, i);
                if mask.count_ones() >= 2 {
                    let count = self.partitions(i, mask).len();
                    opts.extend((0..count as u32).map(|partition| Opt::Split {
                        speaker: i as u8,
                        partition,
                    }));
                }
            }
        }
        let opts: Rc<[Opt]> = opts.into();
        self.option_cache.insert((rect, can_split), opts.clone());
        opts
    }

    /// Whether some subtree over `rect` at `depth` has all leaves labelable.
    fn completable(&mut self, rect: Rect, depth: usize) -> bool {
        if self.p.filter == LeafFilter::Any {
            return true;
        }
        if let Some(&c) = self.completable_cache.get(&(rect, depth)) {
            return c;
        }
        let mut ok = !self.labels(rect).is_empty();
        if !ok && depth < self.p.max_depth {
            'outer: for i in 0..self.p.n {
                let mask = rect_mask(rect, i);
                if mask.count_ones() < 2 {
                    continue;
                }
                for blocks in self.partitions(i, mask).iter() {
                    if blocks
                        .iter()
                        .all(|&b| self.completable(rect_with(rect, i, b), depth + 1))
                    {
                        ok = true;
                        break 'outer;
                    }
                }
            }
        }
        self.completable_cache.insert((rect, depth), ok);
        ok
    }

    fn undo_to(&mut self, nodes_len: usize, pending_len: usize, leaves_len: usize) {
        self.nodes.truncate(nodes_len);
        self.pending.truncate(pending_len);
        self.leaves.truncate(leaves_len);
    }

    fn attach(&mut self, parent: Option<(u32, u8)>, child: u32) {
        if let Some((p, e)) = parent {
            if let PKind::Split { children, .. } = &mut self.nodes[p as usize].kind {
                children[e as usize] = child;
            }
        }
    }

    fn apply(&mut self, slot: &Slot, opt: Opt) -> bool {
        self.visited += 1;
        let id = self.nodes.len() as u32;
        match opt {
            Opt::Leaf(label) => {
                self.nodes.push(PNode {
                    rect: slot.rect,
                    path: slot.path.clone(),
                    kind: PKind::Leaf(label),
                });
                self.attach(slot.parent, id);
                if self.pruning && !self.pairs_ok(id) {
                    return false;
                }
                self.leaves.push(id);
                true
            }
            Opt::Split { speaker, partition } => {
                let i = speaker as usize;
                let blocks =
                    self.partitions(i, rect_mask(slot.rect, i))[partition as usize].clone();
                for &b in blocks.iter() {
                    if !self.completable(rect_with(slot.rect, i, b), slot.depth + 1) {
                        return false;
                    }
                }
                self.nodes.push(PNode {
                    rect: slot.rect,
                    path: slot.path.clone(),
                    kind: PKind::Split {
                        speaker,
                        blocks: blocks.clone(),
                        children: vec![u32::MAX; blocks.len()],
                    },
                });
                self.attach(slot.parent, id);
                for (e, &b) in blocks.iter().enumerate().rev() {
                    let mut path = slot.path.to_vec();
                    path.push((id, e as u8));
                    self.pending.push(Slot {
                        rect: rect_with(slot.rect, i, b),
                        depth: slot.depth + 1,
                        parent: Some((id, e as u8)),
                        path: path.into(),
                    });
                }
                true
            }
        }
    }

    /// Checks the new leaf against every leaf labeled before it.
    fn pairs_ok(&self, id: u32) -> bool {
        let new = &self.nodes[id as usize];
        let PKind::Leaf(l) = new.kind else {
            return true;
        };
        for &other in &self.leaves {
            let old = &self.nodes[other as usize];
            let PKind::Leaf(lo) = old.kind else { continue };
            let Some((lca, _)) = new
                .path
                .iter()
                .zip(old.path.iter())
                .find(|(a, b)| a.1 != b.1)
                .map(|(a, _)| *a)
            else {
                continue;
            };
            let PKind::Split { speaker, .. } = self.nodes[lca as usize].kind else {
                continue;
            };
            let i = speaker as usize;
            let util = &self.p.util[i];
            let (mn, mo) = (rect_mask(new.rect, i), rect_mask(old.rect, i));
            for (v, per_label) in util.iter().enumerate() {
                let bit = 1u16 << v;
                if mn & bit != 0 && per_label[l as usize] < per_label[lo as usize] {
                    return false;
                }
                if mo & bit != 0 && per_label[lo as usize] < per_label[l as usize] {
                    return false;
                }
            }
        }
        true
    }

    /// Vertex-by-vertex obvious-dominance check of a complete tree.
    fn complete_tree_ok(&self) -> bool {
        // (min, max) utility over leaves below each node, for one (player, valuation);
        // the min only counts leaves where the valuation is still consistent.
        fn extremes(
            nodes: &[PNode],
            util: &[i64],
            player: usize,
            v: usize,
            node: u32,
        ) -> (Option<i64>, i64) {
            let n = &nodes[node as usize];
            match &n.kind {
                PKind::Leaf(l) => {
                    let u = util[*l as usize];
                    let consistent = rect_mask(n.rect, player) & (1 << v) != 0;
                    (consistent.then_some(u), u)
                }
                PKind::Split { children, .. } => {
                    let mut lo: Option<i64> = None;
                    let mut hi = i64::MIN;
                    for &c in children {
                        let (a, b) = extremes(nodes, util, player, v, c);
                        lo = match (lo, a) {
                            (Some(x), Some(y)) => Some(x.min(y)),
                            (x, y) => x.or(y),
                        };
                        hi = hi.max(b);
                    }
                    (lo, hi)
                }
            }
        }

        for node in &self.nodes {
            let PKind::Split {
                speaker,
                blocks,
                children,
            } = &node.kind
            else {
                continue;
            };
            let i = *speaker as usize;
            let mask = rect_mask(node.rect, i);
            for v in (0..self.p.sizes[i]).filter(|v| mask & (1 << v) != 0) {
                let util = &self.p.util[i][v];
                let follow = blocks
                    .iter()
                    .position(|b| b & (1 << v) != 0)
                    .expect("partition");
                let (worst, _) = extremes(&self.nodes, util, i, v, children[follow]);
                let best = children
                    .iter()
                    .enumerate()
                    .filter(|&(e, _)| e != follow)
                    .map(|(_, &c)| extremes(&self.nodes, util, i, v, c).1)
                    .max()
                    .expect("at least two blocks");
                if worst.expect("the follow branch keeps v consistent") < best {
                    return false;
                }
            }
        }
        true
    }

    /// Advances to the next complete tree in enumeration order.
    /// `stop` is polled periodically; a true answer leaves the engine
    /// resumable at the point it was interrupted.
    pub fn next_tree(&mut self, stop: &dyn Fn() -> bool) -> Step {
        if self.done {
            return Step::Exhausted;
        }
        let mut open = !self.started;
        if !self.started {
            self.started = true;
            self.pending.push(Slot {
                rect: self.p.full_rect(),
                depth: 0,
                parent: None,
                path: Rc::from(Vec::new()),
            });
        }
        let mut ticks: u32 = 0;
        loop {
            if open {
                match self.pending.pop() {
                    None => {
                        self.trees += 1;
                        if self.pruning
                            || self.p.filter == LeafFilter::Any
                            || self.complete_tree_ok()
                        {
                            return Step::Complete;
                        }
                    }
                    Some(slot) => {
                        let mut options = self.options(slot.rect, slot.depth);
                        if self.frames.is_empty() {
                            if let Some(k) = self.root_choice {
                                options = options
                                    .get(k)
                                    .map_or_else(|| Rc::from(Vec::new()), |&o| Rc::from(vec![o]));
                            }
                        }
                        self.frames.push(Frame {
                            slot,
                            options,
                            next: 0,
                            nodes_len: self.nodes.len(),
                            pending_len: self.pending.len(),
                            leaves_len: self.leaves.len(),
                        });
                    }
                }
            }
            // advance the deepest frame that still has options
            loop {
                ticks = ticks.wrapping_add(1);
                if ticks % 4096 == 0 && stop() {
                    return Step::Interrupted;
                }
                let Some(top) = self.frames.last_mut() else {
                    self.done = true;
                    return Step::Exhausted;
                };
                let (nl, pl, ll) = (top.nodes_len, top.pending_len, top.leaves_len);
                if top.next >= top.options.len() {
                    let frame = self.frames.pop().expect("nonempty");
                    self.undo_to(nl, pl, ll);
                    self.pending.push(frame.slot);
                    continue;
                }
                let opt = top.options[top.next];
                top.next += 1;
                let slot = top.slot.clone();
                self.undo_to(nl, pl, ll);
                if self.apply(&slot, opt) {
                    open = true;
                    break;
                }
            }
        }
    }
}

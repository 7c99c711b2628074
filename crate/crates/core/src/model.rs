//! Protocol trees, allocations and behaviors, with the execution semantics
//! (`run`, attainability) every checker builds on.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingKind {
    Combinatorial,
    MultiUnit,
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingKind::Combinatorial => f.write_str("combinatorial"),
            SettingKind::MultiUnit => f.write_str("multi-unit"),
        }
    }
}

/// Players `0..n` and items `0..m` (distinct items, or identical units).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuctionSetting {
    pub kind: SettingKind,
    pub n: usize,
    pub m: usize,
}

/// Largest item count supported by the bitmask bundle encoding.
pub const MAX_ITEMS: usize = 63;

impl AuctionSetting {
    pub fn new(kind: SettingKind, n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSetting("need at least one player".into()));
        }
        if m == 0 {
            return Err(Error::InvalidSetting("need at least one item".into()));
        }
        if m > MAX_ITEMS {
            return Err(Error::InvalidSetting(format!(
                "at most {MAX_ITEMS} items supported"
            )));
        }
        Ok(AuctionSetting { kind, n, m })
    }

    pub fn combinatorial(n: usize, m: usize) -> Result<Self> {
        Self::new(SettingKind::Combinatorial, n, m)
    }

    pub fn multi_unit(n: usize, m: usize) -> Result<Self> {
        Self::new(SettingKind::MultiUnit, n, m)
    }

    /// `k = max{m, n}`, the scale parameter of the adversarial fixtures.
    pub fn k(&self) -> i64 {
        self.n.max(self.m) as i64
    }

    pub fn empty_bundle(&self) -> Bundle {
        match self.kind {
            SettingKind::Combinatorial => Bundle::Items(0),
            SettingKind::MultiUnit => Bundle::Units(0),
        }
    }

    pub fn grand_bundle(&self) -> Bundle {
        match self.kind {
            SettingKind::Combinatorial => Bundle::Items(full_mask(self.m)),
            SettingKind::MultiUnit => Bundle::Units(self.m as u32),
        }
    }

    /// Every bundle of the setting, ordered by mask (resp. quantity).
    pub fn all_bundles(&self) -> Vec<Bundle> {
        match self.kind {
            SettingKind::Combinatorial => (0..=full_mask(self.m)).map(Bundle::Items).collect(),
            SettingKind::MultiUnit => (0..=self.m as u32).map(Bundle::Units).collect(),
        }
    }

    /// The empty allocation.
    pub fn empty_allocation(&self) -> Allocation {
        Allocation(vec![self.empty_bundle(); self.n])
    }

    /// Every valid allocation, in a fixed deterministic order.
    ///
    /// Combinatorial: each item goes to one player or stays unallocated.
    /// Multi-unit: all quantity vectors with sum at most `m`.
    pub fn all_allocations(&self) -> Vec<Allocation> {
        let mut out = Vec::new();
        match self.kind {
            SettingKind::Combinatorial => {
                let owners = self.n + 1;
                let total = owners.pow(self.m as u32);
                for code in 0..total {
                    let mut masks = vec![0u64; self.n];
                    let mut c = code;
                    for item in 0..self.m {
                        let owner = c % owners;
                        c /= owners;
                        if owner > 0 {
                            masks[owner - 1] |= 1 << item;
                        }
                    }
                    out.push(Allocation(masks.into_iter().map(Bundle::Items).collect()));
                }
            }
            SettingKind::MultiUnit => {
                let mut current = vec![0u32; self.n];
                fill_units(self.m as u32, 0, &mut current, &mut out);
            }
        }
        out
    }
}

fn fill_units(left: u32, player: usize, current: &mut Vec<u32>, out: &mut Vec<Allocation>) {
    if player == current.len() {
        out.push(Allocation(
            current.iter().map(|&q| Bundle::Units(q)).collect(),
        ));
        return;
    }
    for q in 0..=left {
        current[player] = q;
        fill_units(left - q, player + 1, current, out);
    }
    current[player] = 0;
}

pub(crate) fn full_mask(m: usize) -> u64 {
    if m >= 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

/// A set of items (bitmask over item indices) or a number of identical units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bundle {
    Items(u64),
    Units(u32),
}

impl Bundle {
    pub fn from_items(items: &[usize]) -> Bundle {
        Bundle::Items(items.iter().fold(0u64, |m, &i| m | (1 << i)))
    }

    pub fn is_empty(&self) -> bool {
        match *self {
            Bundle::Items(mask) => mask == 0,
            Bundle::Units(q) => q == 0,
        }
    }

    /// True iff `self` contains `other` (superset, or at least as many units).
    /// Bundles of different kinds never contain each other.
    pub fn contains(&self, other: &Bundle) -> bool {
        match (*self, *other) {
            (Bundle::Items(a), Bundle::Items(b)) => a & b == b,
            (Bundle::Units(a), Bundle::Units(b)) => a >= b,
            _ => false,
        }
    }

    pub fn items(&self) -> Vec<usize> {
        match *self {
            Bundle::Items(mask) => (0..64).filter(|i| mask & (1 << i) != 0).collect(),
            Bundle::Units(_) => Vec::new(),
        }
    }

    pub fn kind(&self) -> SettingKind {
        match self {
            Bundle::Items(_) => SettingKind::Combinatorial,
            Bundle::Units(_) => SettingKind::MultiUnit,
        }
    }

    pub fn validate(&self, setting: &AuctionSetting) -> std::result::Result<(), String> {
        match (*self, setting.kind) {
            (Bundle::Items(mask), SettingKind::Combinatorial) => {
                if mask & !full_mask(setting.m) != 0 {
                    Err(format!(
                        "bundle {self} names an item outside 0..{}",
                        setting.m
                    ))
                } else {
                    Ok(())
                }
            }
            (Bundle::Units(q), SettingKind::MultiUnit) => {
                if q as usize > setting.m {
                    Err(format!("quantity {q} exceeds {} units", setting.m))
                } else {
                    Ok(())
                }
            }
            _ => Err(format!(
                "bundle {self} does not match a {} setting",
                setting.kind
            )),
        }
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bundle::Items(_) => {
                let items: Vec<String> = self.items().iter().map(|i| i.to_string()).collect();
                write!(f, "{{{}}}", items.join(","))
            }
            Bundle::Units(q) => write!(f, "{q}"),
        }
    }
}

impl Serialize for Bundle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bundle::Items(_) => self.items().serialize(s),
            Bundle::Units(q) => q.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Bundle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Items(Vec<usize>),
            Units(u32),
        }
        match Raw::deserialize(d)? {
            Raw::Units(q) => Ok(Bundle::Units(q)),
            Raw::Items(items) => {
                let mut seen = HashSet::new();
                for &i in &items {
                    if i >= 64 {
                        return Err(serde::de::Error::custom(format!(
                            "item index {i} too large"
                        )));
                    }
                    if !seen.insert(i) {
                        return Err(serde::de::Error::custom(format!("item {i} listed twice")));
                    }
                }
                Ok(Bundle::from_items(&items))
            }
        }
    }
}

/// One bundle per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<Bundle>);

impl Allocation {
    pub fn bundle(&self, player: usize) -> &Bundle {
        &self.0[player]
    }

    /// Checks arity, kinds, disjointness (combinatorial) and the unit budget (multi-unit).
    pub fn validate(&self, setting: &AuctionSetting) -> std::result::Result<(), String> {
        if self.0.len() != setting.n {
            return Err(format!(
                "{} bundles for {} players",
                self.0.len(),
                setting.n
            ));
        }
        for b in &self.0 {
            b.validate(setting)?;
        }
        match setting.kind {
            SettingKind::Combinatorial => {
                let mut seen = 0u64;
                for b in &self.0 {
                    if let Bundle::Items(mask) = *b {
                        if seen & mask != 0 {
                            return Err("bundles overlap".into());
                        }
                        seen |= mask;
                    }
                }
            }
            SettingKind::MultiUnit => {
                let total: usize = self
                    .0
                    .iter()
                    .map(|b| match b {
                        Bundle::Units(q) => *q as usize,
                        Bundle::Items(_) => 0,
                    })
                    .sum();
                if total > setting.m {
                    return Err(format!(
                        "{total} units allocated but only {} exist",
                        setting.m
                    ));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Orders message labels numerically when both are integers, lexically otherwise.
pub fn label_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub label: String,
    pub child: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Internal {
        speaker: usize,
        edges: Vec<Edge>,
    },
    Leaf {
        allocation: Allocation,
        payments: Vec<Rational>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: Option<String>,
    pub kind: NodeKind,
    /// Parent node and the index of the edge leading here.
    pub parent: Option<(NodeId, usize)>,
    pub depth: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn speaker(&self) -> Option<usize> {
        match self.kind {
            NodeKind::Internal { speaker, .. } => Some(speaker),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn edges(&self) -> &[Edge] {
        match &self.kind {
            NodeKind::Internal { edges, .. } => edges,
            NodeKind::Leaf { .. } => &[],
        }
    }
}

/// Flat, unvalidated description of a tree: nodes refer to children by index.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub nodes: Vec<NodeSpec>,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: Option<String>,
    pub kind: NodeSpecKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeSpecKind {
    Internal {
        speaker: usize,
        edges: Vec<(String, usize)>,
    },
    Leaf {
        allocation: Allocation,
        payments: Vec<Rational>,
    },
}

impl TreeSpec {
    pub fn new() -> Self {
        TreeSpec {
            nodes: Vec::new(),
            root: 0,
        }
    }

    pub fn add_leaf(&mut self, allocation: Allocation, payments: Vec<Rational>) -> usize {
        self.nodes.push(NodeSpec {
            name: None,
            kind: NodeSpecKind::Leaf {
                allocation,
                payments,
            },
        });
        self.nodes.len() - 1
    }

    pub fn add_internal(&mut self, speaker: usize, edges: Vec<(String, usize)>) -> usize {
        self.nodes.push(NodeSpec {
            name: None,
            kind: NodeSpecKind::Internal { speaker, edges },
        });
        self.nodes.len() - 1
    }

    pub fn name(&mut self, node: usize, name: impl Into<String>) {
        self.nodes[node].name = Some(name.into());
    }
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self::new()
    }
}

/// A validated protocol tree. Node ids are assigned in preorder with edges
/// sorted by [`label_order`], so they are stable under serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MechanismTree {
    setting: AuctionSetting,
    nodes: Vec<Node>,
}

/// Outcome of running a behavior profile: the reached leaf and the visited nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Play {
    pub leaf: NodeId,
    pub path: Vec<NodeId>,
}

/// Validates a structural description and produces a canonical tree.
pub fn build_tree(spec: &TreeSpec, setting: AuctionSetting) -> Result<MechanismTree> {
    let describe = |i: usize| -> String {
        match spec.nodes.get(i).and_then(|n| n.name.clone()) {
            Some(name) => format!("{name} (#{i})"),
            None => format!("#{i}"),
        }
    };
    if spec.root >= spec.nodes.len() {
        return Err(Error::NotATree("root index out of range".into()));
    }

    let mut parent_of: Vec<Option<usize>> = vec![None; spec.nodes.len()];
    for (i, node) in spec.nodes.iter().enumerate() {
        match &node.kind {
            NodeSpecKind::Internal { speaker, edges } => {
                if edges.is_empty() {
                    return Err(Error::EmptyNode { node: describe(i) });
                }
                if *speaker >= setting.n {
                    return Err(Error::SpeakerOutOfRange {
                        node: describe(i),
                        speaker: *speaker,
                        players: setting.n,
                    });
                }
                let mut labels = HashSet::new();
                for (label, child) in edges {
                    if !labels.insert(label.as_str()) {
                        return Err(Error::DuplicateLabel {
                            node: describe(i),
                            label: label.clone(),
                        });
                    }
                    if *child >= spec.nodes.len() {
                        return Err(Error::NotATree(format!(
                            "edge {label:?} of {} points to missing node #{child}",
                            describe(i)
                        )));
                    }
                    if *child == spec.root {
                        return Err(Error::NotATree(format!(
                            "edge {label:?} of {} points back to the root",
                            describe(i)
                        )));
                    }
                    if let Some(p) = parent_of[*child] {
                        return Err(Error::NotATree(format!(
                            "{} has two parents ({} and {})",
                            describe(*child),
                            describe(p),
                            describe(i)
                        )));
                    }
                    parent_of[*child] = Some(i);
                }
            }
            NodeSpecKind::Leaf {
                allocation,
                payments,
            } => {
                if payments.len() != setting.n {
                    return Err(Error::PaymentArity {
                        node: describe(i),
                        found: payments.len(),
                        expected: setting.n,
                    });
                }
                allocation
                    .validate(&setting)
                    .map_err(|reason| Error::InvalidAllocation {
                        node: describe(i),
                        reason,
                    })?;
            }
        }
    }

    // Preorder walk from the root; anything unvisited is an orphan or sits on a cycle.
    let mut nodes: Vec<Node> = Vec::with_capacity(spec.nodes.len());
    let mut visited = vec![false; spec.nodes.len()];
    // (spec index, parent and edge, depth)
    type Pending = (usize, Option<(NodeId, usize)>, usize);
    let mut stack: Vec<Pending> = vec![(spec.root, None, 0)];
    while let Some((src, parent, depth)) = stack.pop() {
        if visited[src] {
            return Err(Error::NotATree(format!("{} reached twice", describe(src))));
        }
        visited[src] = true;
        let id = nodes.len();
        if let Some((p, edge)) = parent {
            if let NodeKind::Internal { edges, .. } = &mut nodes[p].kind {
                edges[edge].child = id;
            }
        }
        let spec_node = &spec.nodes[src];
        let kind = match &spec_node.kind {
            NodeSpecKind::Leaf {
                allocation,
                payments,
            } => NodeKind::Leaf {
                allocation: allocation.clone(),
                payments: payments.clone(),
            },
            NodeSpecKind::Internal { speaker, edges } => {
                let mut sorted: Vec<&(String, usize)> = edges.iter().collect();
                sorted.sort_by(|a, b| label_order(&a.0, &b.0));
                for (idx, (_, child)) in sorted.iter().enumerate().rev() {
                    stack.push((*child, Some((id, idx)), depth + 1));
                }
                NodeKind::Internal {
                    speaker: *speaker,
                    edges: sorted
                        .iter()
                        .map(|(label, _)| Edge {
                            label: label.clone(),
                            child: usize::MAX,
                        })
                        .collect(),
                }
            }
        };
        nodes.push(Node {
            name: spec_node.name.clone(),
            kind,
            parent,
            depth,
        });
    }
    if let Some(orphan) = visited.iter().position(|v| !v) {
        return Err(Error::NotATree(format!(
            "{} is not reachable from the root (orphan or cycle)",
            describe(orphan)
        )));
    }
    Ok(MechanismTree { setting, nodes })
}

impl MechanismTree {
    pub fn setting(&self) -> &AuctionSetting {
        &self.setting
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn get(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate()
    }

    /// Finds a node by its optional display name.
    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name.as_deref() == Some(name))
    }

    /// Name if present, otherwise `#id`.
    pub fn display_name(&self, id: NodeId) -> String {
        match &self.nodes[id].name {
            Some(name) => name.clone(),
            None => format!("#{id}"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, _)| i)
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_leaf())
            .map(|(i, _)| i)
    }

    /// The nodes where `player` speaks.
    pub fn nodes_of(&self, player: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.speaker() == Some(player))
            .map(|(i, _)| i)
    }

    /// Number of internal levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.depth)
            .max()
            .unwrap_or(0)
    }

    pub fn leaf_outcome(&self, leaf: NodeId) -> Option<(&Allocation, &[Rational])> {
        match &self.nodes[leaf].kind {
            NodeKind::Leaf {
                allocation,
                payments,
            } => Some((allocation, payments)),
            NodeKind::Internal { .. } => None,
        }
    }

    /// Leaves of the subtree rooted at `node`, in preorder. Preorder ids make
    /// every subtree a contiguous id range, so this is a scan.
    pub fn subtree_leaves(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.subtree_range(node)
            .filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn subtree_range(&self, node: NodeId) -> std::ops::Range<NodeId> {
        let depth = self.nodes[node].depth;
        let end = (node + 1..self.nodes.len())
            .find(|&i| self.nodes[i].depth <= depth)
            .unwrap_or(self.nodes.len());
        node..end
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, node: NodeId) -> bool {
        self.subtree_range(ancestor).contains(&node)
    }

    /// Nodes from the root to `node`, inclusive.
    pub fn path_to(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some((p, _)) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Index of the edge at `node` whose subtree contains `descendant`.
    pub fn edge_towards(&self, node: NodeId, descendant: NodeId) -> Option<usize> {
        self.nodes[node]
            .edges()
            .iter()
            .position(|e| self.is_ancestor_or_self(e.child, descendant))
    }

    /// Runs the tree, asking `choose(node, speaker)` for an edge index at each internal node.
    pub fn run_with<F>(&self, mut choose: F) -> Result<Play>
    where
        F: FnMut(NodeId, usize) -> Option<usize>,
    {
        let mut path = vec![self.root()];
        let mut cur = self.root();
        loop {
            match &self.nodes[cur].kind {
                NodeKind::Leaf { .. } => return Ok(Play { leaf: cur, path }),
                NodeKind::Internal { speaker, edges } => {
                    let idx = choose(cur, *speaker).filter(|&i| i < edges.len()).ok_or(
                        Error::MissingChoice {
                            node: cur,
                            player: *speaker,
                        },
                    )?;
                    cur = edges[idx].child;
                    path.push(cur);
                }
            }
        }
    }
}

/// A player's message choice (edge index) at every node where she speaks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Behavior {
    owner: usize,
    choices: BTreeMap<NodeId, usize>,
}

impl Behavior {
    /// Validates that `choices` covers exactly the owner's nodes with existing edges.
    pub fn new(
        tree: &MechanismTree,
        owner: usize,
        choices: BTreeMap<NodeId, usize>,
    ) -> Result<Self> {
        for (&node, &edge) in &choices {
            let n = tree.get(node)?;
            if n.speaker() != Some(owner) {
                return Err(Error::NodeNotOwned {
                    node,
                    player: owner,
                });
            }
            if edge >= n.edges().len() {
                return Err(Error::MissingChoice {
                    node,
                    player: owner,
                });
            }
        }
        if let Some(missing) = tree.nodes_of(owner).find(|n| !choices.contains_key(n)) {
            return Err(Error::MissingChoice {
                node: missing,
                player: owner,
            });
        }
        Ok(Behavior { owner, choices })
    }

    /// Same as [`Behavior::new`] but with message labels instead of edge indices.
    pub fn from_labels(
        tree: &MechanismTree,
        owner: usize,
        labels: &BTreeMap<NodeId, String>,
    ) -> Result<Self> {
        let mut choices = BTreeMap::new();
        for (&node, label) in labels {
            let n = tree.get(node)?;
            let idx = n
                .edges()
                .iter()
                .position(|e| &e.label == label)
                .ok_or_else(|| {
                    Error::InvalidBehavior(format!("node {node} has no message {label:?}"))
                })?;
            choices.insert(node, idx);
        }
        Self::new(tree, owner, choices)
    }

    /// Sends the first message everywhere.
    pub fn first_message(tree: &MechanismTree, owner: usize) -> Self {
        Behavior {
            owner,
            choices: tree.nodes_of(owner).map(|n| (n, 0)).collect(),
        }
    }

    /// Builds a total behavior from a per-node rule.
    pub fn from_fn<F>(tree: &MechanismTree, owner: usize, mut rule: F) -> Result<Self>
    where
        F: FnMut(NodeId) -> usize,
    {
        let choices = tree.nodes_of(owner).map(|n| (n, rule(n))).collect();
        Self::new(tree, owner, choices)
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn choice(&self, node: NodeId) -> Option<usize> {
        self.choices.get(&node).copied()
    }

    pub fn label<'t>(&self, tree: &'t MechanismTree, node: NodeId) -> Option<&'t str> {
        let idx = self.choice(node)?;
        tree.node(node).edges().get(idx).map(|e| e.label.as_str())
    }

    pub fn choices(&self) -> &BTreeMap<NodeId, usize> {
        &self.choices
    }

    /// Overrides the choices along the root path of `target`, so that this
    /// player never steers away from it.
    pub fn routed_to(&self, tree: &MechanismTree, target: NodeId) -> Behavior {
        let mut out = self.clone();
        for node in tree.path_to(target) {
            if tree.node(node).speaker() == Some(self.owner) {
                if let Some(edge) = tree.edge_towards(node, target) {
                    out.choices.insert(node, edge);
                }
            }
        }
        out
    }
}

/// Runs a behavior profile (one behavior per player, indexed by owner).
pub fn run(tree: &MechanismTree, profile: &[Behavior]) -> Result<Play> {
    tree.run_with(|node, speaker| profile.get(speaker).and_then(|b| b.choice(node)))
}

/// Whether `node` can be reached when `player` follows `behavior`, for some
/// behavior of the others: every node of `player` strictly above `node` must
/// send the edge leading towards it.
pub fn attainable(
    tree: &MechanismTree,
    player: usize,
    behavior: &Behavior,
    node: NodeId,
) -> Result<bool> {
    let n = tree.get(node)?;
    if n.speaker() != Some(player) {
        return Err(Error::NodeNotOwned { node, player });
    }
    let mut cur = node;
    while let Some((parent, edge)) = tree.node(cur).parent {
        if tree.node(parent).speaker() == Some(player) && behavior.choice(parent) != Some(edge) {
            return Ok(false);
        }
        cur = parent;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting() -> AuctionSetting {
        AuctionSetting::combinatorial(2, 1).unwrap()
    }

    fn leaf(spec: &mut TreeSpec, winner: Option<usize>) -> usize {
        let mut bundles = vec![Bundle::Items(0); 2];
        if let Some(w) = winner {
            bundles[w] = Bundle::Items(1);
        }
        spec.add_leaf(Allocation(bundles), vec![Rational::ZERO; 2])
    }

    #[test]
    fn single_leaf_tree() {
        let mut spec = TreeSpec::new();
        spec.root = leaf(&mut spec, None);
        let tree = build_tree(&spec, setting()).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.internal_nodes().count(), 0);
        assert_eq!(tree.depth(), 0);
        let play = run(&tree, &[]).unwrap();
        assert_eq!(play.leaf, 0);
        assert_eq!(play.path, vec![0]);
    }

    #[test]
    fn duplicate_label_rejected() {
        let mut spec = TreeSpec::new();
        let a = leaf(&mut spec, None);
        let b = leaf(&mut spec, Some(0));
        spec.root = spec.add_internal(0, vec![("1".into(), a), ("1".into(), b)]);
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::DuplicateLabel { .. })
        ));
    }

    #[test]
    fn structural_errors() {
        // overlapping bundles
        let mut spec = TreeSpec::new();
        spec.root = spec.add_leaf(
            Allocation(vec![Bundle::Items(1), Bundle::Items(1)]),
            vec![Rational::ZERO; 2],
        );
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::InvalidAllocation { .. })
        ));

        // speaker out of range
        let mut spec = TreeSpec::new();
        let a = leaf(&mut spec, None);
        spec.root = spec.add_internal(2, vec![("x".into(), a)]);
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::SpeakerOutOfRange { .. })
        ));

        // orphan
        let mut spec = TreeSpec::new();
        let a = leaf(&mut spec, None);
        leaf(&mut spec, None);
        spec.root = spec.add_internal(0, vec![("x".into(), a)]);
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::NotATree(_))
        ));

        // cycle between two internal nodes detached from the root
        let mut spec = TreeSpec::new();
        let root_leaf = leaf(&mut spec, None);
        spec.add_internal(0, vec![("a".into(), 2)]);
        spec.add_internal(1, vec![("b".into(), 1)]);
        spec.root = root_leaf;
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::NotATree(_))
        ));

        // shared child
        let mut spec = TreeSpec::new();
        let a = leaf(&mut spec, None);
        spec.root = spec.add_internal(0, vec![("x".into(), a), ("y".into(), a)]);
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::NotATree(_))
        ));

        // empty internal node
        let mut spec = TreeSpec::new();
        spec.root = spec.add_internal(0, vec![]);
        assert!(matches!(
            build_tree(&spec, setting()),
            Err(Error::EmptyNode { .. })
        ));
    }

    #[test]
    fn canonical_ids_follow_sorted_labels() {
        let mut spec = TreeSpec::new();
        let a = leaf(&mut spec, Some(0));
        let b = leaf(&mut spec, Some(1));
        let c = leaf(&mut spec, None);
        spec.root = spec.add_internal(0, vec![("10".into(), a), ("2".into(), b), ("1".into(), c)]);
        let tree = build_tree(&spec, setting()).unwrap();
        let labels: Vec<&str> = tree
            .node(0)
            .edges()
            .iter()
            .map(|e| e.label.as_str())
            .collect();
        assert_eq!(labels, vec!["1", "2", "10"]);
        assert_eq!(tree.node(0).edges()[0].child, 1);
        assert_eq!(tree.node(0).edges()[2].child, 3);
    }

    #[test]
    fn attainability_on_a_two_level_chain() {
        // player 0 speaks at the root and again below edge "a"
        let mut spec = TreeSpec::new();
        let l1 = leaf(&mut spec, None);
        let l2 = leaf(&mut spec, Some(0));
        let l3 = leaf(&mut spec, Some(1));
        let inner = spec.add_internal(0, vec![("c".into(), l1), ("d".into(), l2)]);
        spec.root = spec.add_internal(0, vec![("a".into(), inner), ("b".into(), l3)]);
        let tree = build_tree(&spec, setting()).unwrap();
        let inner = tree.node(0).edges()[0].child;

        let towards = Behavior::new(&tree, 0, [(0, 0), (inner, 1)].into()).unwrap();
        let away = Behavior::new(&tree, 0, [(0, 1), (inner, 1)].into()).unwrap();
        assert!(attainable(&tree, 0, &towards, 0).unwrap());
        assert!(attainable(&tree, 0, &away, 0).unwrap());
        assert!(attainable(&tree, 0, &towards, inner).unwrap());
        assert!(!attainable(&tree, 0, &away, inner).unwrap());
        assert!(matches!(
            attainable(&tree, 1, &towards, 0),
            Err(Error::NodeNotOwned { .. })
        ));
    }

    #[test]
    fn behavior_must_be_total() {
        let mut spec = TreeSpec::new();
        let a = leaf(&mut spec, None);
        let b = leaf(&mut spec, None);
        spec.root = spec.add_internal(0, vec![("x".into(), a), ("y".into(), b)]);
        let tree = build_tree(&spec, setting()).unwrap();
        assert!(Behavior::new(&tree, 0, BTreeMap::new()).is_err());
        assert!(Behavior::new(&tree, 0, [(0, 2)].into()).is_err());
        assert!(Behavior::new(&tree, 1, [(0, 0)].into()).is_err());
        let b = Behavior::from_labels(&tree, 0, &[(0, "y".to_string())].into()).unwrap();
        assert_eq!(b.choice(0), Some(1));
    }

    #[test]
    fn allocations_enumerated() {
        let ca = AuctionSetting::combinatorial(2, 2).unwrap();
        let all = ca.all_allocations();
        assert_eq!(all.len(), 9);
        assert!(all.iter().all(|a| a.validate(&ca).is_ok()));

        let mu = AuctionSetting::multi_unit(2, 2).unwrap();
        let all = mu.all_allocations();
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|a| a.validate(&mu).is_ok()));
        assert!(Allocation(vec![Bundle::Units(2), Bundle::Units(1)])
            .validate(&mu)
            .is_err());
    }
}

//! JSON file formats for mechanisms and domains.
//!
//! A mechanism file holds the setting and a nested node tree. Internal nodes
//! are `{"speaker": i, "edges": {label: node, ...}}`, leaves are
//! `{"allocation": [...], "payments": ["p/q", ...]}`; any node may carry a
//! `"name"`. Strategies and a domain are optional. Strategies refer to nodes
//! by name or by path (`"/"` for the root, `"/2/quit"` below it).
//!
//! Serialization is canonical: edges appear in message order and rationals
//! are reduced, so `parse(serialize(parse(x))) == parse(x)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mechanisms::MechanismBundle;
use crate::model::{
    build_tree, Allocation, AuctionSetting, Behavior, MechanismTree, NodeId, NodeKind,
    NodeSpecKind, TreeSpec,
};
use crate::rational::Rational;
use crate::strategy::StrategyTable;
use crate::valuation::{Domain, LabeledValuation};

pub const MECHANISM_FORMAT: &str = "ospcheck-mechanism/1";
pub const DOMAIN_FORMAT: &str = "ospcheck-domain/1";

/// Deepest bracket nesting accepted before parsing; keeps recursion bounded.
pub const MAX_NESTING: usize = 1024;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMechanism {
    format: String,
    setting: AuctionSetting,
    root: RawNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategies: Option<Vec<RawStrategy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<RawDomainFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Edges>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    allocation: Option<Allocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payments: Option<Vec<Rational>>,
}

/// Edge map that keeps duplicate keys so they can be reported.
#[derive(Debug)]
struct Edges(Vec<(String, RawNode)>);

impl Serialize for Edges {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (label, node) in &self.0 {
            map.serialize_entry(label, node)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Edges {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EdgeVisitor;
        impl<'de> Visitor<'de> for EdgeVisitor {
            type Value = Edges;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping message labels to nodes")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Edges, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, RawNode>()? {
                    out.push((k, v));
                }
                Ok(Edges(out))
            }
        }
        d.deserialize_map(EdgeVisitor)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    player: usize,
    /// valuation label -> node reference -> message label
    behaviors: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomainFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    setting: AuctionSetting,
    players: Vec<Vec<LabeledValuation>>,
}

/// Contents of a mechanism file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MechanismFile {
    pub tree: MechanismTree,
    pub strategies: Option<Vec<StrategyTable>>,
    pub domain: Option<Domain>,
}

impl MechanismFile {
    /// Pairs the tree and strategies with `domain`, or with the embedded one.
    pub fn into_bundle(self, domain: Option<Domain>) -> Result<MechanismBundle> {
        let domain = domain.or(self.domain).ok_or_else(|| {
            Error::InvalidParameter(
                "no domain given and none embedded in the mechanism file".into(),
            )
        })?;
        if domain.setting() != self.tree.setting() {
            return Err(Error::InvalidDomain(
                "domain setting differs from the mechanism setting".into(),
            ));
        }
        let strategies = self.strategies.ok_or_else(|| {
            Error::InvalidParameter("the mechanism file has no strategies section".into())
        })?;
        crate::strategy::resolve(&strategies, &domain)?;
        Ok(MechanismBundle {
            tree: self.tree,
            strategies,
            domain,
        })
    }
}

fn syntax(e: serde_json::Error) -> Error {
    Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Rejects inputs nested deeper than [`MAX_NESTING`], reporting the position.
fn check_nesting(bytes: &[u8]) -> Result<()> {
    let (mut depth, mut in_string, mut escaped) = (0usize, false, false);
    let (mut line, mut column) = (1usize, 0usize);
    for &b in bytes {
        column += 1;
        if b == b'\n' {
            line += 1;
            column = 0;
        }
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => {
                depth += 1;
                if depth > MAX_NESTING {
                    return Err(Error::Syntax {
                        line,
                        column,
                        message: format!("nesting deeper than {MAX_NESTING}"),
                    });
                }
            }
            b'}' | b']' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    Ok(())
}

fn from_json<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T> {
    check_nesting(bytes)?;
    let mut de = serde_json::Deserializer::from_slice(bytes);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de).map_err(syntax)?;
    de.end().map_err(syntax)?;
    Ok(value)
}

fn check_format(found: Option<&str>, expected: &str) -> Result<()> {
    match found {
        Some(f) if f != expected => Err(Error::Parse(format!(
            "unsupported format {f:?}, expected {expected:?}"
        ))),
        _ => Ok(()),
    }
}

fn child_path(parent: &str, label: &str) -> String {
    if parent == "/" {
        format!("/{label}")
    } else {
        format!("{parent}/{label}")
    }
}

/// Flattens the nested nodes into a spec, validating each node in place so
/// errors name the node path.
fn flatten(
    node: RawNode,
    path: String,
    setting: &AuctionSetting,
    spec: &mut TreeSpec,
) -> Result<usize> {
    let at = |e: Error| e.context(format!("at node {path}"));
    let describe = || match &node.name {
        Some(n) => format!("{path} ({n})"),
        None => path.clone(),
    };
    let name = node.name.clone();
    let id = match (node.speaker, node.edges, node.allocation, node.payments) {
        (Some(speaker), Some(Edges(edges)), None, None) => {
            if edges.is_empty() {
                return Err(Error::EmptyNode { node: describe() });
            }
            if speaker >= setting.n {
                return Err(Error::SpeakerOutOfRange {
                    node: describe(),
                    speaker,
                    players: setting.n,
                });
            }
            let mut seen = std::collections::HashSet::new();
            for (label, _) in &edges {
                if !seen.insert(label.clone()) {
                    return Err(Error::DuplicateLabel {
                        node: describe(),
                        label: label.clone(),
                    });
                }
            }
            let id = spec.add_internal(speaker, Vec::new());
            let mut out = Vec::with_capacity(edges.len());
            for (label, child) in edges {
                let c = flatten(child, child_path(&path, &label), setting, spec)?;
                out.push((label, c));
            }
            if let NodeSpecKind::Internal { edges, .. } = &mut spec.nodes[id].kind {
                *edges = out;
            }
            id
        }
        (None, None, Some(allocation), Some(payments)) => {
            allocation
                .validate(setting)
                .map_err(|reason| Error::InvalidAllocation {
                    node: describe(),
                    reason,
                })?;
            if payments.len() != setting.n {
                return Err(Error::PaymentArity {
                    node: describe(),
                    found: payments.len(),
                    expected: setting.n,
                });
            }
            spec.add_leaf(allocation, payments)
        }
        _ => {
            return Err(at(Error::Parse(
                "a node needs either speaker and edges, or allocation and payments".into(),
            )))
        }
    };
    spec.nodes[id].name = name;
    Ok(id)
}

/// Node paths of a built tree, indexed by node id.
fn node_paths(tree: &MechanismTree) -> Vec<String> {
    let mut paths = vec![String::new(); tree.len()];
    paths[tree.root()] = "/".to_string();
    for id in 0..tree.len() {
        // preorder ids: parents come first
        for e in tree.node(id).edges() {
            paths[e.child] = child_path(&paths[id], &e.label);
        }
    }
    paths
}

fn node_ref(tree: &MechanismTree, paths: &[String], id: NodeId) -> String {
    tree.node(id)
        .name
        .clone()
        .unwrap_or_else(|| paths[id].clone())
}

/// Parses and validates a mechanism file.
pub fn parse_mechanism(bytes: &[u8]) -> Result<MechanismFile> {
    let raw: RawMechanism = from_json(bytes)?;
    check_format(Some(&raw.format), MECHANISM_FORMAT)?;
    AuctionSetting::new(raw.setting.kind, raw.setting.n, raw.setting.m)?;
    let mut spec = TreeSpec::new();
    spec.root = flatten(raw.root, "/".to_string(), &raw.setting, &mut spec)?;
    let tree = build_tree(&spec, raw.setting).map_err(|e| e.context("building the tree"))?;

    let domain = raw
        .domain
        .map(|d| -> Result<Domain> {
            check_format(d.format.as_deref(), DOMAIN_FORMAT)?;
            if d.setting != raw.setting {
                return Err(Error::InvalidDomain(
                    "embedded domain setting differs from the mechanism setting".into(),
                ));
            }
            Domain::new(d.setting, d.players)
        })
        .transpose()
        .map_err(|e| e.context("in the embedded domain"))?;

    let strategies = match raw.strategies {
        None => None,
        Some(list) => {
            let paths = node_paths(&tree);
            let mut refs: HashMap<&str, NodeId> = HashMap::new();
            for (id, p) in paths.iter().enumerate() {
                refs.insert(p, id);
            }
            for id in 0..tree.len() {
                if let Some(n) = &tree.node(id).name {
                    refs.insert(n, id);
                }
            }
            let mut tables: Vec<Option<StrategyTable>> = vec![None; raw.setting.n];
            for s in list {
                let slot = tables.get_mut(s.player).ok_or_else(|| {
                    Error::InvalidBehavior(format!("strategy for unknown player {}", s.player))
                })?;
                if slot.is_some() {
                    return Err(Error::InvalidBehavior(format!(
                        "two strategies for player {}",
                        s.player
                    )));
                }
                let mut table = StrategyTable::new(s.player);
                for (valuation, choices) in s.behaviors {
                    let labels = choices
                        .into_iter()
                        .map(|(r, label)| {
                            refs.get(r.as_str()).map(|&id| (id, label)).ok_or_else(|| {
                                Error::InvalidBehavior(format!("unknown node {r:?}"))
                            })
                        })
                        .collect::<Result<BTreeMap<_, _>>>()
                        .and_then(|labels| Behavior::from_labels(&tree, s.player, &labels))
                        .map_err(|e| {
                            e.context(format!("strategy of player {} for {valuation:?}", s.player))
                        })?;
                    table.insert(valuation, labels)?;
                }
                *slot = Some(table);
            }
            Some(
                tables
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| {
                        t.ok_or_else(|| {
                            Error::InvalidBehavior(format!("no strategy for player {i}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    Ok(MechanismFile {
        tree,
        strategies,
        domain,
    })
}

fn raw_node(tree: &MechanismTree, id: NodeId) -> RawNode {
    let node = tree.node(id);
    let mut raw = RawNode {
        name: node.name.clone(),
        speaker: None,
        edges: None,
        allocation: None,
        payments: None,
    };
    match &node.kind {
        NodeKind::Internal { speaker, edges } => {
            raw.speaker = Some(*speaker);
            raw.edges = Some(Edges(
                edges
                    .iter()
                    .map(|e| (e.label.clone(), raw_node(tree, e.child)))
                    .collect(),
            ));
        }
        NodeKind::Leaf {
            allocation,
            payments,
        } => {
            raw.allocation = Some(allocation.clone());
            raw.payments = Some(payments.clone());
        }
    }
    raw
}

fn raw_domain(domain: &Domain, format: bool) -> RawDomainFile {
    RawDomainFile {
        format: format.then(|| DOMAIN_FORMAT.to_string()),
        setting: *domain.setting(),
        players: domain.players().to_vec(),
    }
}

/// Canonical JSON for a tree with optional strategies and domain.
pub fn serialize_mechanism(
    tree: &MechanismTree,
    strategies: Option<&[StrategyTable]>,
    domain: Option<&Domain>,
) -> Result<String> {
    let paths = node_paths(tree);
    let raw = RawMechanism {
        format: MECHANISM_FORMAT.to_string(),
        setting: *tree.setting(),
        root: raw_node(tree, tree.root()),
        strategies: strategies.map(|list| {
            list.iter()
                .map(|t| RawStrategy {
                    player: t.player(),
                    behaviors: t
                        .iter()
                        .map(|(label, b)| {
                            let choices = b
                                .choices()
                                .keys()
                                .map(|&node| {
                                    let msg = b.label(tree, node).unwrap_or_default().to_string();
                                    (node_ref(tree, &paths, node), msg)
                                })
                                .collect();
                            (label.clone(), choices)
                        })
                        .collect(),
                })
                .collect()
        }),
        domain: domain.map(|d| raw_domain(d, false)),
    };
    serde_json::to_string_pretty(&raw).map_err(|e| Error::Parse(e.to_string()))
}

pub fn serialize_bundle(bundle: &MechanismBundle) -> Result<String> {
    serialize_mechanism(&bundle.tree, Some(&bundle.strategies), Some(&bundle.domain))
}

pub fn parse_domain(bytes: &[u8]) -> Result<Domain> {
    let raw: RawDomainFile = from_json(bytes)?;
    check_format(raw.format.as_deref(), DOMAIN_FORMAT)?;
    AuctionSetting::new(raw.setting.kind, raw.setting.n, raw.setting.m)?;
    Domain::new(raw.setting, raw.players)
}

pub fn serialize_domain(domain: &Domain) -> Result<String> {
    serde_json::to_string_pretty(&raw_domain(domain, true)).map_err(|e| Error::Parse(e.to_string()))
}

//! µpath decision diagrams.
//!
//! A [`MuDD`] is a DAG of event, counter, decision and done nodes. Walking its
//! causality edges from the entry node, choosing a value whenever an unassigned
//! decision property is met, yields the set of µpaths. Each µpath's
//! [`CounterSignature`] counts how often each counter fires along it.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on the number of enumerated µpaths.
pub const DEFAULT_PATH_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MuddError {
    #[error("path explosion: more than {cap} µpaths")]
    PathExplosion { cap: usize },
    #[error("causality edges contain a cycle through node {node}")]
    CycleDetected { node: usize },
    #[error("property `{property}` is assigned `{value}` but decision node {node} has no matching edge")]
    DanglingDecision {
        node: usize,
        property: String,
        value: String,
    },
    #[error("unknown counter `{0}`")]
    UnknownCounter(String),
    #[error("duplicate counter `{0}` in namespace")]
    DuplicateCounter(String),
    #[error("node {node}: {reason}")]
    MalformedNode { node: usize, reason: String },
    #[error("node index {0} out of range")]
    InvalidNode(usize),
}

/// Ordered set of counter names. Position in this list is the coordinate of
/// the counter in every vector downstream.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CounterNamespace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl CounterNamespace {
    pub fn new<I, S>(names: I) -> Result<Self, MuddError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ns = CounterNamespace::default();
        for name in names {
            let name = name.into();
            if ns.index.contains_key(&name) {
                return Err(MuddError::DuplicateCounter(name));
            }
            ns.index.insert(name.clone(), ns.names.len());
            ns.names.push(name);
        }
        Ok(ns)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Keeps only the named counters, in this namespace's order. Returns the
    /// restricted namespace and, for each kept counter, its old coordinate.
    pub fn restrict(&self, keep: &[&str]) -> (CounterNamespace, Vec<usize>) {
        let coords: Vec<usize> = (0..self.len())
            .filter(|&i| keep.contains(&self.names[i].as_str()))
            .collect();
        let ns = CounterNamespace::new(coords.iter().map(|&i| self.names[i].clone()))
            .expect("subset of a valid namespace is valid");
        (ns, coords)
    }
}

impl PartialEq for CounterNamespace {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for CounterNamespace {}

impl TryFrom<Vec<String>> for CounterNamespace {
    type Error = MuddError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        CounterNamespace::new(names)
    }
}

impl From<CounterNamespace> for Vec<String> {
    fn from(ns: CounterNamespace) -> Self {
        ns.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeKind {
    Event { name: String },
    Counter { name: String },
    Decision { property: String },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    #[serde(flatten)]
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Node {
    pub fn new(kind: NodeKind) -> Self {
        Node { kind, label: None }
    }

    pub fn labeled(kind: NodeKind, label: impl Into<String>) -> Self {
        Node {
            kind,
            label: Some(label.into()),
        }
    }
}

/// A causality edge. Edges leaving a decision node carry the property value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalityEdge {
    pub from: usize,
    pub to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HappensBefore {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MuddGraph {
    namespace: CounterNamespace,
    entry: usize,
    nodes: Vec<Node>,
    causality: Vec<CausalityEdge>,
    #[serde(default)]
    happens_before: Vec<HappensBefore>,
}

/// A validated µpath decision diagram. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MuddGraph", into = "MuddGraph")]
pub struct MuDD {
    nodes: Vec<Node>,
    // outgoing causality edges per node, in declaration order
    out: Vec<Vec<(usize, Option<String>)>>,
    happens_before: Vec<HappensBefore>,
    entry: usize,
    namespace: CounterNamespace,
    // counter coordinate per node, None for non-counter nodes
    counter_coord: Vec<Option<usize>>,
}

impl MuDD {
    pub fn new(
        namespace: CounterNamespace,
        nodes: Vec<Node>,
        causality: Vec<CausalityEdge>,
        happens_before: Vec<HappensBefore>,
        entry: usize,
    ) -> Result<Self, MuddError> {
        let n = nodes.len();
        if entry >= n {
            return Err(MuddError::InvalidNode(entry));
        }
        let mut out: Vec<Vec<(usize, Option<String>)>> = vec![Vec::new(); n];
        for e in causality {
            if e.from >= n {
                return Err(MuddError::InvalidNode(e.from));
            }
            if e.to >= n {
                return Err(MuddError::InvalidNode(e.to));
            }
            out[e.from].push((e.to, e.value));
        }
        for hb in &happens_before {
            for id in [hb.from, hb.to] {
                if id >= n {
                    return Err(MuddError::InvalidNode(id));
                }
            }
        }

        let mut counter_coord = vec![None; n];
        for (id, node) in nodes.iter().enumerate() {
            let edges = &out[id];
            let malformed = |reason: &str| MuddError::MalformedNode {
                node: id,
                reason: reason.to_string(),
            };
            match &node.kind {
                NodeKind::Done => {
                    if !edges.is_empty() {
                        return Err(malformed("done node has outgoing causality edges"));
                    }
                }
                NodeKind::Decision { .. } => {
                    if edges.is_empty() {
                        return Err(malformed("decision node has no outgoing edges"));
                    }
                    let mut seen = Vec::with_capacity(edges.len());
                    for (_, value) in edges {
                        let Some(value) = value else {
                            return Err(malformed("decision edge without a value label"));
                        };
                        if seen.contains(&value) {
                            return Err(malformed(&format!("duplicate branch value `{value}`")));
                        }
                        seen.push(value);
                    }
                }
                NodeKind::Event { .. } | NodeKind::Counter { .. } => {
                    if edges.len() != 1 {
                        return Err(malformed("expected exactly one outgoing causality edge"));
                    }
                    if edges[0].1.is_some() {
                        return Err(malformed("labeled edge leaving a non-decision node"));
                    }
                }
            }
            if let NodeKind::Counter { name } = &node.kind {
                counter_coord[id] = Some(
                    namespace
                        .index_of(name)
                        .ok_or_else(|| MuddError::UnknownCounter(name.clone()))?,
                );
            }
        }

        let model = MuDD {
            nodes,
            out,
            happens_before,
            entry,
            namespace,
            counter_coord,
        };
        model.check_acyclic()?;
        Ok(model)
    }

    fn check_acyclic(&self) -> Result<(), MuddError> {
        // 0 = unvisited, 1 = on stack, 2 = finished
        let mut state = vec![0u8; self.nodes.len()];
        for root in 0..self.nodes.len() {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            state[root] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some((succ, _)) = self.out[node].get(*next) {
                    *next += 1;
                    match state[*succ] {
                        0 => {
                            state[*succ] = 1;
                            stack.push((*succ, 0));
                        }
                        1 => return Err(MuddError::CycleDetected { node: *succ }),
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    pub fn namespace(&self) -> &CounterNamespace {
        &self.namespace
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    /// Outgoing causality edges of `id` as `(target, value)` pairs.
    pub fn successors(&self, id: usize) -> &[(usize, Option<String>)] {
        &self.out[id]
    }

    pub fn happens_before(&self) -> &[HappensBefore] {
        &self.happens_before
    }

    pub fn causality_edges(&self) -> impl Iterator<Item = CausalityEdge> + '_ {
        self.out.iter().enumerate().flat_map(|(from, edges)| {
            edges.iter().map(move |(to, value)| CausalityEdge {
                from,
                to: *to,
                value: value.clone(),
            })
        })
    }

    /// Same diagram with a different happens-before edge set.
    pub fn with_happens_before(&self, happens_before: Vec<HappensBefore>) -> Result<Self, MuddError> {
        MuDD::new(
            self.namespace.clone(),
            self.nodes.clone(),
            self.causality_edges().collect(),
            happens_before,
            self.entry,
        )
    }
}

impl TryFrom<MuddGraph> for MuDD {
    type Error = MuddError;

    fn try_from(g: MuddGraph) -> Result<Self, Self::Error> {
        MuDD::new(g.namespace, g.nodes, g.causality, g.happens_before, g.entry)
    }
}

impl From<MuDD> for MuddGraph {
    fn from(m: MuDD) -> Self {
        MuddGraph {
            causality: m.causality_edges().collect(),
            namespace: m.namespace,
            entry: m.entry,
            nodes: m.nodes,
            happens_before: m.happens_before,
        }
    }
}

/// Incremental construction of a [`MuDD`], mostly for programmatic models.
#[derive(Debug, Default)]
pub struct MuddBuilder {
    nodes: Vec<Node>,
    causality: Vec<CausalityEdge>,
    happens_before: Vec<HappensBefore>,
}

impl MuddBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn event(&mut self, name: &str) -> usize {
        self.node(Node::new(NodeKind::Event { name: name.into() }))
    }

    pub fn counter(&mut self, name: &str) -> usize {
        self.node(Node::new(NodeKind::Counter { name: name.into() }))
    }

    pub fn decision(&mut self, property: &str) -> usize {
        self.node(Node::new(NodeKind::Decision {
            property: property.into(),
        }))
    }

    pub fn done(&mut self) -> usize {
        self.node(Node::new(NodeKind::Done))
    }

    pub fn edge(&mut self, from: usize, to: usize) -> &mut Self {
        self.causality.push(CausalityEdge {
            from,
            to,
            value: None,
        });
        self
    }

    pub fn branch(&mut self, from: usize, value: &str, to: usize) -> &mut Self {
        self.causality.push(CausalityEdge {
            from,
            to,
            value: Some(value.into()),
        });
        self
    }

    pub fn order(&mut self, from: usize, to: usize) -> &mut Self {
        self.happens_before.push(HappensBefore { from, to });
        self
    }

    pub fn build(self, namespace: CounterNamespace, entry: usize) -> Result<MuDD, MuddError> {
        MuDD::new(
            namespace,
            self.nodes,
            self.causality,
            self.happens_before,
            entry,
        )
    }
}

/// One execution path through a diagram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MuPath {
    pub nodes: Vec<usize>,
    /// Property assignments in the order they were made.
    pub assignment: Vec<(String, String)>,
    pub happens_before: Vec<HappensBefore>,
}

impl MuPath {
    pub fn value_of(&self, property: &str) -> Option<&str> {
        self.assignment
            .iter()
            .find(|(p, _)| p == property)
            .map(|(_, v)| v.as_str())
    }

    pub fn describe_assignment(&self) -> String {
        if self.assignment.is_empty() {
            return "(no decisions)".to_string();
        }
        self.assignment
            .iter()
            .map(|(p, v)| format!("{p}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Per-counter increment counts of one µpath.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CounterSignature {
    pub counts: Vec<u64>,
    /// Index of the µpath this signature came from, when known.
    pub source_path: Option<usize>,
}

impl CounterSignature {
    pub fn new(counts: Vec<u64>) -> Self {
        CounterSignature {
            counts,
            source_path: None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Restriction to the given coordinates.
    pub fn project(&self, coords: &[usize]) -> CounterSignature {
        CounterSignature {
            counts: coords.iter().map(|&i| self.counts[i]).collect(),
            source_path: self.source_path,
        }
    }

    pub fn display(&self, ns: &CounterNamespace) -> String {
        let parts: Vec<String> = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}={}", ns.name(i), c))
            .collect();
        format!("({})", parts.join(", "))
    }
}

impl fmt::Display for CounterSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Enumerates every µpath of `model`, depth first with edges taken in
/// declaration order.
pub fn enumerate_mupaths(model: &MuDD, cap: usize) -> Result<Vec<MuPath>, MuddError> {
    let mut walker = Walker {
        model,
        cap,
        nodes: Vec::new(),
        assignment: Vec::new(),
        paths: Vec::new(),
    };
    walker.visit(model.entry)?;
    Ok(walker.paths)
}

struct Walker<'a> {
    model: &'a MuDD,
    cap: usize,
    nodes: Vec<usize>,
    assignment: Vec<(String, String)>,
    paths: Vec<MuPath>,
}

impl Walker<'_> {
    fn visit(&mut self, mut node: usize) -> Result<(), MuddError> {
        let model = self.model;
        let mark = self.nodes.len();
        loop {
            self.nodes.push(node);
            match &model.nodes[node].kind {
                NodeKind::Done => {
                    self.emit()?;
                    break;
                }
                NodeKind::Decision { property } => {
                    let edges = &model.out[node];
                    let assigned = self
                        .assignment
                        .iter()
                        .find(|(p, _)| p == property)
                        .map(|(_, v)| v.clone());
                    match assigned {
                        Some(value) => {
                            let next = edges
                                .iter()
                                .find(|(_, v)| v.as_deref() == Some(value.as_str()))
                                .map(|(t, _)| *t)
                                .ok_or_else(|| MuddError::DanglingDecision {
                                    node,
                                    property: property.clone(),
                                    value,
                                })?;
                            node = next;
                        }
                        None => {
                            for (target, value) in edges {
                                let value = value.clone().expect("validated decision edge");
                                self.assignment.push((property.clone(), value));
                                let result = self.visit(*target);
                                self.assignment.pop();
                                result?;
                            }
                            break;
                        }
                    }
                }
                NodeKind::Event { .. } | NodeKind::Counter { .. } => {
                    node = model.out[node][0].0;
                }
            }
        }
        self.nodes.truncate(mark);
        Ok(())
    }

    fn emit(&mut self) -> Result<(), MuddError> {
        if self.paths.len() >= self.cap {
            return Err(MuddError::PathExplosion { cap: self.cap });
        }
        let on_path = |id: usize| self.nodes.contains(&id);
        let happens_before = self
            .model
            .happens_before
            .iter()
            .filter(|hb| on_path(hb.from) && on_path(hb.to))
            .copied()
            .collect();
        self.paths.push(MuPath {
            nodes: self.nodes.clone(),
            assignment: self.assignment.clone(),
            happens_before,
        });
        Ok(())
    }
}

/// Counts counter occurrences along `path`, in the coordinates of `ns`.
pub fn signature_of(
    model: &MuDD,
    path: &MuPath,
    ns: &CounterNamespace,
) -> Result<CounterSignature, MuddError> {
    let mut counts = vec![0u64; ns.len()];
    for &id in &path.nodes {
        if let NodeKind::Counter { name } = &model.nodes[id].kind {
            let i = if ns == &model.namespace {
                model.counter_coord[id].expect("counter nodes carry a coordinate")
            } else {
                ns.index_of(name)
                    .ok_or_else(|| MuddError::UnknownCounter(name.clone()))?
            };
            counts[i] += 1;
        }
    }
    Ok(CounterSignature {
        counts,
        source_path: None,
    })
}

/// Signatures of all µpaths, in enumeration order, duplicates kept.
pub fn signatures_of_model(model: &MuDD, cap: usize) -> Result<Vec<CounterSignature>, MuddError> {
    enumerate_mupaths(model, cap)?
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut sig = signature_of(model, p, &model.namespace)?;
            sig.source_path = Some(i);
            Ok(sig)
        })
        .collect()
}

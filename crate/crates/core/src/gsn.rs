//! Goal Structuring Notation argument trees.
//!
//! A [`GsnTree`] is validated once at construction and is immutable
//! afterwards. `SupportedBy` links form a tree rooted at a single goal;
//! `InContextOf` links hang assumptions, contexts and justifications off
//! goals and strategies. Leaf evidence statuses are combined upward by
//! [`GsnTree::propagate_status`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier, unique within a case.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, GsnError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'));
        if ok {
            Ok(Self(id))
        } else {
            Err(GsnError::InvalidNodeId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = GsnError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A semantic tag in normalized form: lowercase, trimmed, inner whitespace
/// collapsed to single spaces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Tag(String);

impl Tag {
    pub fn new(raw: &str) -> Result<Self, GsnError> {
        let normalized = raw
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        if normalized.is_empty() {
            Err(GsnError::EmptyTag)
        } else {
            Ok(Self(normalized))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Tag {
    type Error = GsnError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<Tag> for String {
    fn from(tag: Tag) -> Self {
        tag.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Goal,
    Strategy,
    Solution,
    Assumption,
    Context,
    Justification,
}

impl NodeKind {
    /// Kinds whose status is supplied from evidence rather than derived.
    pub fn is_leaf(self) -> bool {
        matches!(self, NodeKind::Solution | NodeKind::Assumption)
    }

    fn is_argument(self) -> bool {
        matches!(self, NodeKind::Goal | NodeKind::Strategy)
    }

    fn is_contextual(self) -> bool {
        matches!(
            self,
            NodeKind::Assumption | NodeKind::Context | NodeKind::Justification
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    SupportedBy,
    InContextOf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsnNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<Tag>,
    /// Goal or strategy intentionally left without support.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undeveloped: bool,
}

impl GsnNode {
    pub fn new(id: NodeId, kind: NodeKind, text: impl Into<String>) -> Self {
        Self {
            id,
            kind,
            text: text.into(),
            tags: BTreeSet::new(),
            undeveloped: false,
        }
    }

    pub fn with_tags<'a>(mut self, tags: impl IntoIterator<Item = &'a str>) -> Result<Self, GsnError> {
        for t in tags {
            self.tags.insert(Tag::new(t)?);
        }
        Ok(self)
    }

    pub fn undeveloped(mut self) -> Self {
        self.undeveloped = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsnEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

impl GsnEdge {
    pub fn supported_by(from: &NodeId, to: &NodeId) -> Self {
        Self {
            from: from.clone(),
            to: to.clone(),
            kind: EdgeKind::SupportedBy,
        }
    }

    pub fn in_context_of(from: &NodeId, to: &NodeId) -> Self {
        Self {
            from: from.clone(),
            to: to.clone(),
            kind: EdgeKind::InContextOf,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GsnError {
    #[error("invalid node id {0:?}: expected [A-Za-z0-9_.-]+")]
    InvalidNodeId(String),
    #[error("empty tag")]
    EmptyTag,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge {from} -> {to} references a node that does not exist")]
    DanglingEdge { from: NodeId, to: NodeId },
    #[error("{kind:?} edge {from} -> {to} not allowed between {from_kind:?} and {to_kind:?}")]
    BadEdgeKind {
        from: NodeId,
        to: NodeId,
        kind: EdgeKind,
        from_kind: NodeKind,
        to_kind: NodeKind,
    },
    #[error("SupportedBy cycle through {0}")]
    CycleDetected(NodeId),
    #[error("node {0} has more than one SupportedBy parent")]
    MultipleParents(NodeId),
    #[error("no root goal: {0}")]
    NoRoot(String),
    #[error("node {0} is not connected to the root")]
    Unreachable(NodeId),
    #[error("{0} has no supporting element and is not marked undeveloped")]
    MissingSupport(NodeId),
    #[error("{0} is not a leaf of the tree")]
    UnknownLeafId(NodeId),
}

/// Three-valued validity of a node. Ordered `Invalid < Unknown < Valid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Validity {
    Invalid,
    Unknown,
    Valid,
}

impl Validity {
    /// Invalid-dominant conjunction.
    pub fn and(self, other: Validity) -> Validity {
        self.min(other)
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Validity::Valid => "Valid",
            Validity::Invalid => "Invalid",
            Validity::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

/// Status of every node after propagation.
pub type StatusMap = BTreeMap<NodeId, Validity>;

/// A validated GSN tree. Edges are stored sorted so equal trees compare equal
/// regardless of the order they were supplied in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GsnTree {
    nodes: BTreeMap<NodeId, GsnNode>,
    edges: Vec<GsnEdge>,
    root: NodeId,
    // Derived adjacency, kept in sync with `edges`.
    children: BTreeMap<NodeId, Vec<(EdgeKind, NodeId)>>,
    parent: BTreeMap<NodeId, NodeId>,
}

impl GsnTree {
    pub fn build(
        nodes: impl IntoIterator<Item = GsnNode>,
        edges: impl IntoIterator<Item = GsnEdge>,
        root: NodeId,
    ) -> Result<Self, GsnError> {
        let mut node_map = BTreeMap::new();
        for node in nodes {
            if node_map.contains_key(&node.id) {
                return Err(GsnError::DuplicateNode(node.id));
            }
            node_map.insert(node.id.clone(), node);
        }
        let mut edges: Vec<GsnEdge> = edges.into_iter().collect();
        edges.sort();
        edges.dedup();

        for e in &edges {
            let (Some(from), Some(to)) = (node_map.get(&e.from), node_map.get(&e.to)) else {
                return Err(GsnError::DanglingEdge {
                    from: e.from.clone(),
                    to: e.to.clone(),
                });
            };
            let allowed = match e.kind {
                EdgeKind::SupportedBy => {
                    from.kind.is_argument()
                        && matches!(to.kind, NodeKind::Goal | NodeKind::Strategy | NodeKind::Solution)
                }
                EdgeKind::InContextOf => from.kind.is_argument() && to.kind.is_contextual(),
            };
            if !allowed {
                return Err(GsnError::BadEdgeKind {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    kind: e.kind,
                    from_kind: from.kind,
                    to_kind: to.kind,
                });
            }
        }

        let mut children: BTreeMap<NodeId, Vec<(EdgeKind, NodeId)>> = BTreeMap::new();
        for e in &edges {
            children
                .entry(e.from.clone())
                .or_default()
                .push((e.kind, e.to.clone()));
        }
        detect_cycle(&node_map, &children)?;

        let mut parent = BTreeMap::new();
        let mut context_parents: BTreeSet<&NodeId> = BTreeSet::new();
        for e in &edges {
            match e.kind {
                EdgeKind::SupportedBy => {
                    if parent.insert(e.to.clone(), e.from.clone()).is_some() {
                        return Err(GsnError::MultipleParents(e.to.clone()));
                    }
                }
                EdgeKind::InContextOf => {
                    context_parents.insert(&e.to);
                }
            }
        }

        match node_map.get(&root) {
            None => return Err(GsnError::NoRoot(format!("root {root} is not a node"))),
            Some(n) if n.kind != NodeKind::Goal => {
                return Err(GsnError::NoRoot(format!("root {root} is a {:?}", n.kind)))
            }
            Some(_) if parent.contains_key(&root) => {
                return Err(GsnError::NoRoot(format!("root {root} has a SupportedBy parent")))
            }
            Some(_) => {}
        }

        for node in node_map.values() {
            if node.id == root {
                continue;
            }
            let attached = if node.kind.is_contextual() {
                context_parents.contains(&node.id)
            } else {
                parent.contains_key(&node.id)
            };
            if !attached {
                return Err(GsnError::Unreachable(node.id.clone()));
            }
        }

        // Every node is attached and there are no cycles, but a parent chain
        // could still end at a non-root orphan goal. Walk from the root.
        let mut seen = BTreeSet::new();
        let mut stack = vec![&root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(ch) = children.get(id) {
                stack.extend(ch.iter().map(|(_, c)| c));
            }
        }
        if let Some(orphan) = node_map.keys().find(|id| !seen.contains(id)) {
            return Err(GsnError::Unreachable(orphan.clone()));
        }

        for node in node_map.values() {
            if node.kind.is_argument() && !node.undeveloped {
                let supported = children
                    .get(&node.id)
                    .is_some_and(|c| c.iter().any(|(k, _)| *k == EdgeKind::SupportedBy));
                if !supported {
                    return Err(GsnError::MissingSupport(node.id.clone()));
                }
            }
        }

        Ok(Self {
            nodes: node_map,
            edges,
            root,
            children,
            parent,
        })
    }

    pub fn root(&self) -> &NodeId {
        &self.root
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GsnNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&GsnNode> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &[GsnEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Solution and assumption ids, sorted.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind.is_leaf())
            .map(|n| n.id.clone())
            .collect()
    }

    pub fn is_leaf(&self, id: &NodeId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.kind.is_leaf())
    }

    /// SupportedBy parent, or for contextual nodes the first InContextOf owner.
    pub fn parents(&self, id: &NodeId) -> Vec<&NodeId> {
        if let Some(p) = self.parent.get(id) {
            return vec![p];
        }
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::InContextOf && &e.to == id)
            .map(|e| &e.from)
            .collect()
    }

    /// All transitive ancestors of `id` (excluding `id`).
    pub fn ancestors(&self, id: &NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&NodeId> = self.parents(id);
        while let Some(p) = stack.pop() {
            if out.insert(p.clone()) {
                stack.extend(self.parents(p));
            }
        }
        out
    }

    /// Combine leaf statuses up to the root.
    ///
    /// Goals and strategies take the Invalid-dominant conjunction of their
    /// SupportedBy children and their InContextOf assumptions. Contexts and
    /// justifications are always Valid and never influence their owner.
    /// Undeveloped goals are Unknown. Leaves absent from `leaf_statuses`
    /// default to Unknown.
    pub fn propagate_status(
        &self,
        leaf_statuses: &BTreeMap<NodeId, Validity>,
    ) -> Result<StatusMap, GsnError> {
        if let Some(bad) = leaf_statuses.keys().find(|id| !self.is_leaf(id)) {
            return Err(GsnError::UnknownLeafId(bad.clone()));
        }
        let mut out = StatusMap::new();
        self.status_of(&self.root, leaf_statuses, &mut out);
        // Contextual nodes shared between owners are visited more than once;
        // anything not reached is impossible after `build`.
        debug_assert_eq!(out.len(), self.nodes.len());
        Ok(out)
    }

    fn status_of(
        &self,
        id: &NodeId,
        leaf_statuses: &BTreeMap<NodeId, Validity>,
        out: &mut StatusMap,
    ) -> Validity {
        if let Some(v) = out.get(id) {
            return *v;
        }
        let node = &self.nodes[id];
        let status = match node.kind {
            NodeKind::Solution | NodeKind::Assumption => {
                leaf_statuses.get(id).copied().unwrap_or(Validity::Unknown)
            }
            NodeKind::Context | NodeKind::Justification => Validity::Valid,
            NodeKind::Goal | NodeKind::Strategy => {
                let mut acc = Validity::Valid;
                for (kind, child) in self.children.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                    let s = self.status_of(child, leaf_statuses, out);
                    let counts = match kind {
                        EdgeKind::SupportedBy => true,
                        EdgeKind::InContextOf => self.nodes[child].kind == NodeKind::Assumption,
                    };
                    if counts {
                        acc = acc.and(s);
                    }
                }
                if node.undeveloped {
                    Validity::Unknown
                } else {
                    acc
                }
            }
        };
        out.insert(id.clone(), status);
        status
    }
}

fn detect_cycle(
    nodes: &BTreeMap<NodeId, GsnNode>,
    children: &BTreeMap<NodeId, Vec<(EdgeKind, NodeId)>>,
) -> Result<(), GsnError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<&NodeId, Mark> = BTreeMap::new();
    for start in nodes.keys() {
        if marks.contains_key(start) {
            continue;
        }
        // Iterative DFS over SupportedBy edges: (node, next child index).
        let mut stack: Vec<(&NodeId, usize)> = vec![(start, 0)];
        marks.insert(start, Mark::Open);
        while let Some((id, idx)) = stack.pop() {
            let supported: Vec<&NodeId> = children
                .get(id)
                .map(|c| {
                    c.iter()
                        .filter(|(k, _)| *k == EdgeKind::SupportedBy)
                        .map(|(_, n)| n)
                        .collect()
                })
                .unwrap_or_default();
            if idx < supported.len() {
                stack.push((id, idx + 1));
                let next = supported[idx];
                match marks.get(next) {
                    Some(Mark::Open) => return Err(GsnError::CycleDetected(next.clone())),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Open);
                        stack.push((next, 0));
                    }
                }
            } else {
                marks.insert(id, Mark::Done);
            }
        }
    }
    Ok(())
}

//! Typed heterogeneous user/video graph.
//!
//! Nodes are users or videos; edges are user→user follows and user→video
//! donations. The graph is immutable once built. Parallel donation edges
//! are kept as distinct events in the edge list while the adjacency lists
//! collapse them, so degree queries count events and neighbor queries
//! return distinct nodes.

mod io;
mod split;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

pub use io::{
    ingest_edges, ingest_nodes, load_graph_dir, parse_edges, parse_nodes, write_edges,
    write_graph_dir, write_nodes, EDGE_FILE, NODE_FILE,
};
pub use split::{snapshot_split, DroppedEvents, LabelWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Video,
}

impl NodeKind {
    pub const ALL: [NodeKind; 2] = [NodeKind::User, NodeKind::Video];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::User => "User",
            NodeKind::Video => "Video",
        }
    }

    /// Single-letter token used in meta-path strings.
    pub fn token(self) -> &'static str {
        match self {
            NodeKind::User => "U",
            NodeKind::Video => "V",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "User" => Ok(NodeKind::User),
            "Video" => Ok(NodeKind::Video),
            other => Err(format!(
                "unknown node kind `{other}` (expected User or Video)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Follow,
    Donate,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 2] = [EdgeKind::Follow, EdgeKind::Donate];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Follow => "Follow",
            EdgeKind::Donate => "Donate",
        }
    }

    /// Required (source, destination) node kinds.
    pub fn endpoint_kinds(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::Follow => (NodeKind::User, NodeKind::User),
            EdgeKind::Donate => (NodeKind::User, NodeKind::Video),
        }
    }

    /// The edge kind joining two node kinds, ignoring direction.
    pub fn between(a: NodeKind, b: NodeKind) -> Option<EdgeKind> {
        match (a, b) {
            (NodeKind::User, NodeKind::User) => Some(EdgeKind::Follow),
            (NodeKind::User, NodeKind::Video) | (NodeKind::Video, NodeKind::User) => {
                Some(EdgeKind::Donate)
            }
            (NodeKind::Video, NodeKind::Video) => None,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Follow" => Ok(EdgeKind::Follow),
            "Donate" => Ok(EdgeKind::Donate),
            other => Err(format!(
                "unknown edge kind `{other}` (expected Follow or Donate)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Out,
    In,
    Both,
}

impl Direction {
    fn slot(self) -> usize {
        self as usize
    }
}

/// Dense internal node index, assigned in input order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub external_id: String,
    pub kind: NodeKind,
    pub attrs: BTreeMap<String, u64>,
}

/// Node universe with `(external_id, kind)` lookup.
#[derive(Debug, Clone, Default)]
pub struct NodeTable {
    nodes: Vec<Node>,
    lookup: [HashMap<String, NodeId>; 2],
}

impl NodeTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node. On a duplicate `(external_id, kind)` the id of the
    /// existing node is returned as the error.
    pub fn push(
        &mut self,
        external_id: impl Into<String>,
        kind: NodeKind,
        attrs: BTreeMap<String, u64>,
    ) -> std::result::Result<NodeId, NodeId> {
        let external_id = external_id.into();
        let index = &mut self.lookup[kind.slot()];
        if let Some(&existing) = index.get(&external_id) {
            return Err(existing);
        }
        let id = NodeId(self.nodes.len() as u32);
        index.insert(external_id.clone(), id);
        self.nodes.push(Node {
            external_id,
            kind,
            attrs,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    pub fn find(&self, external_id: &str, kind: NodeKind) -> Option<NodeId> {
        self.lookup[kind.slot()].get(external_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }
}

impl std::ops::Index<NodeId> for NodeTable {
    type Output = Node;

    fn index(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    /// Donation count; 1.0 for follows.
    pub weight: f64,
    /// Epoch days. Follows may be untimed (0).
    pub timestamp: i64,
}

impl Edge {
    /// Checks the kind schema against a node table.
    pub fn validate(&self, nodes: &NodeTable) -> Result<()> {
        let src = nodes
            .get(self.src)
            .ok_or_else(|| Error::NotFound(self.src.to_string()))?;
        let dst = nodes
            .get(self.dst)
            .ok_or_else(|| Error::NotFound(self.dst.to_string()))?;
        let (want_src, want_dst) = self.kind.endpoint_kinds();
        if src.kind != want_src || dst.kind != want_dst {
            return Err(Error::Schema(format!(
                "{} edge {} -> {} joins {} -> {}, expected {} -> {}",
                self.kind, src.external_id, dst.external_id, src.kind, dst.kind, want_src, want_dst
            )));
        }
        if self.kind == EdgeKind::Follow && self.src == self.dst {
            return Err(Error::Schema(format!(
                "self-follow on `{}` is not allowed",
                src.external_id
            )));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::Schema(format!(
                "edge weight must be positive and finite, got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Compressed sorted adjacency with duplicate neighbors removed.
#[derive(Debug, Clone, Default)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Csr {
    fn build(n: usize, mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(from, _) in &pairs {
            offsets[from as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, to)| NodeId(to)).collect();
        Self { offsets, targets }
    }

    #[inline]
    fn row(&self, node: usize) -> &[NodeId] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }
}

/// Immutable heterogeneous graph. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct HinGraph {
    nodes: Arc<NodeTable>,
    edges: Vec<Edge>,
    // [edge kind][direction]
    adjacency: [[Csr; 3]; 2],
    // [edge kind][out, in], counting parallel edges
    degree: [[Vec<u32>; 2]; 2],
    edge_count: [usize; 2],
    by_kind: [Vec<NodeId>; 2],
    ordinal: Vec<u32>,
}

impl HinGraph {
    /// Materializes adjacency in both directions per edge kind.
    pub fn build(nodes: impl Into<Arc<NodeTable>>, edges: Vec<Edge>) -> Result<Self> {
        let nodes = nodes.into();
        let n = nodes.len();
        let mut pairs: [[Vec<(u32, u32)>; 3]; 2] = Default::default();
        let mut degree: [[Vec<u32>; 2]; 2] = [[vec![0; n], vec![0; n]], [vec![0; n], vec![0; n]]];
        let mut edge_count = [0usize; 2];
        for e in &edges {
            e.validate(&nodes)?;
            let k = e.kind.slot();
            let (s, d) = (e.src.0, e.dst.0);
            pairs[k][Direction::Out.slot()].push((s, d));
            pairs[k][Direction::In.slot()].push((d, s));
            pairs[k][Direction::Both.slot()].push((s, d));
            pairs[k][Direction::Both.slot()].push((d, s));
            degree[k][0][s as usize] += 1;
            degree[k][1][d as usize] += 1;
            edge_count[k] += 1;
        }
        let adjacency = pairs.map(|per_dir| per_dir.map(|p| Csr::build(n, p)));

        let mut by_kind: [Vec<NodeId>; 2] = Default::default();
        let mut ordinal = Vec::with_capacity(n);
        for (id, node) in nodes.iter() {
            let list = &mut by_kind[node.kind.slot()];
            ordinal.push(list.len() as u32);
            list.push(id);
        }

        Ok(Self {
            nodes,
            edges,
            adjacency,
            degree,
            edge_count,
            by_kind,
            ordinal,
        })
    }

    pub fn node_table(&self) -> &NodeTable {
        &self.nodes
    }

    pub(crate) fn shared_nodes(&self) -> Arc<NodeTable> {
        Arc::clone(&self.nodes)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    pub fn find(&self, external_id: &str, kind: NodeKind) -> Option<NodeId> {
        self.nodes.find(external_id, kind)
    }

    /// The edge multiset in input order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edge_count[kind.slot()]
    }

    /// Number of outgoing edges of `kind`, parallel edges included.
    pub fn out_degree(&self, id: NodeId, kind: EdgeKind) -> usize {
        self.degree[kind.slot()][0][id.index()] as usize
    }

    pub fn in_degree(&self, id: NodeId, kind: EdgeKind) -> usize {
        self.degree[kind.slot()][1][id.index()] as usize
    }

    /// Total number of incident edge events over all kinds.
    pub fn incident_events(&self, id: NodeId) -> usize {
        EdgeKind::ALL
            .iter()
            .map(|&k| self.out_degree(id, k) + self.in_degree(id, k))
            .sum()
    }

    /// Distinct neighbors over one edge kind, ascending. `id` must be valid.
    #[inline]
    pub fn neighbors(&self, id: NodeId, kind: EdgeKind, direction: Direction) -> &[NodeId] {
        self.adjacency[kind.slot()][direction.slot()].row(id.index())
    }

    /// Distinct neighbors over one edge kind (or all kinds when `kind` is
    /// `None`), in ascending internal id order.
    pub fn typed_neighbors(
        &self,
        id: NodeId,
        kind: Option<EdgeKind>,
        direction: Direction,
    ) -> Result<Vec<NodeId>> {
        if !self.contains(id) {
            return Err(Error::NotFound(id.to_string()));
        }
        match kind {
            Some(k) => Ok(self.neighbors(id, k, direction).to_vec()),
            None => {
                let mut all: Vec<NodeId> = EdgeKind::ALL
                    .iter()
                    .flat_map(|&k| self.neighbors(id, k, direction).iter().copied())
                    .collect();
                all.sort_unstable();
                all.dedup();
                Ok(all)
            }
        }
    }

    /// All nodes of a kind, ascending.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> &[NodeId] {
        &self.by_kind[kind.slot()]
    }

    /// Position of a node among the nodes of its own kind.
    pub fn ordinal(&self, id: NodeId) -> usize {
        self.ordinal[id.index()] as usize
    }

    /// Users within `k` undirected hops of `video` over both edge kinds.
    ///
    /// With `exclude_existing_donors`, users holding a donation edge to
    /// `video` are removed. The result is ascending.
    pub fn k_hop_candidates(
        &self,
        video: NodeId,
        k: usize,
        exclude_existing_donors: bool,
    ) -> Result<Vec<NodeId>> {
        if !self.contains(video) {
            return Err(Error::NotFound(video.to_string()));
        }
        if self.kind(video) != NodeKind::Video {
            return Err(Error::Schema(format!(
                "candidate generation needs a Video, `{}` is a {}",
                self.node(video).external_id,
                self.kind(video)
            )));
        }
        if k == 0 {
            return Err(argument("hop count k must be at least 1"));
        }
        let n = self.node_count();
        let mut depth = vec![u32::MAX; n];
        depth[video.index()] = 0;
        let mut queue = VecDeque::from([video]);
        let mut found = Vec::new();
        while let Some(cur) = queue.pop_front() {
            let d = depth[cur.index()];
            if d as usize == k {
                continue;
            }
            for kind in EdgeKind::ALL {
                for &next in self.neighbors(cur, kind, Direction::Both) {
                    if depth[next.index()] == u32::MAX {
                        depth[next.index()] = d + 1;
                        queue.push_back(next);
                        if self.kind(next) == NodeKind::User {
                            found.push(next);
                        }
                    }
                }
            }
        }
        if exclude_existing_donors {
            let donors = self.neighbors(video, EdgeKind::Donate, Direction::In);
            found.retain(|u| donors.binary_search(u).is_err());
        }
        found.sort_unstable();
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(spec: &[(&str, NodeKind)]) -> NodeTable {
        let mut t = NodeTable::new();
        for (id, kind) in spec {
            t.push(*id, *kind, BTreeMap::new()).unwrap();
        }
        t
    }

    fn edge(src: u32, dst: u32, kind: EdgeKind, ts: i64) -> Edge {
        Edge {
            src: NodeId(src),
            dst: NodeId(dst),
            kind,
            weight: 1.0,
            timestamp: ts,
        }
    }

    #[test]
    fn degrees_on_small_graph() {
        use NodeKind::*;
        let nodes = table(&[("u0", User), ("u1", User), ("v0", Video)]);
        let g = HinGraph::build(
            nodes,
            vec![
                edge(0, 1, EdgeKind::Follow, 0),
                edge(0, 2, EdgeKind::Donate, 3),
            ],
        )
        .unwrap();
        assert_eq!(g.out_degree(NodeId(0), EdgeKind::Follow), 1);
        assert_eq!(g.in_degree(NodeId(2), EdgeKind::Donate), 1);
        assert_eq!(g.out_degree(NodeId(1), EdgeKind::Follow), 0);
    }

    #[test]
    fn empty_graph_has_zero_degrees() {
        let nodes = table(&[("u0", NodeKind::User), ("v0", NodeKind::Video)]);
        let g = HinGraph::build(nodes, vec![]).unwrap();
        for id in [NodeId(0), NodeId(1)] {
            for k in EdgeKind::ALL {
                assert_eq!(g.out_degree(id, k), 0);
                assert_eq!(g.in_degree(id, k), 0);
            }
        }
    }

    #[test]
    fn neighbor_queries() {
        use NodeKind::*;
        let nodes = table(&[("u0", User), ("u1", User), ("u2", User), ("u3", User)]);
        let g = HinGraph::build(
            nodes,
            vec![
                edge(0, 1, EdgeKind::Follow, 0),
                edge(0, 2, EdgeKind::Follow, 0),
                edge(3, 0, EdgeKind::Follow, 0),
            ],
        )
        .unwrap();
        let out = g
            .typed_neighbors(NodeId(0), Some(EdgeKind::Follow), Direction::Out)
            .unwrap();
        assert_eq!(out, vec![NodeId(1), NodeId(2)]);
        let both = g.typed_neighbors(NodeId(0), None, Direction::Both).unwrap();
        assert_eq!(both, vec![NodeId(1), NodeId(2), NodeId(3)]);
        assert!(g
            .typed_neighbors(NodeId(2), Some(EdgeKind::Follow), Direction::Out)
            .unwrap()
            .is_empty());
        assert!(matches!(
            g.typed_neighbors(NodeId(9), None, Direction::Both),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn both_direction_union() {
        use NodeKind::*;
        // u0 <- u1 and u0 -> u2
        let nodes = table(&[("u0", User), ("u1", User), ("u2", User)]);
        let g = HinGraph::build(
            nodes,
            vec![
                edge(1, 0, EdgeKind::Follow, 0),
                edge(0, 2, EdgeKind::Follow, 0),
            ],
        )
        .unwrap();
        let both = g
            .typed_neighbors(NodeId(0), Some(EdgeKind::Follow), Direction::Both)
            .unwrap();
        assert_eq!(both, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn parallel_donations_collapse_in_adjacency() {
        use NodeKind::*;
        let nodes = table(&[("u0", User), ("v0", Video)]);
        let g = HinGraph::build(
            nodes,
            vec![
                edge(0, 1, EdgeKind::Donate, 1),
                edge(0, 1, EdgeKind::Donate, 2),
            ],
        )
        .unwrap();
        assert_eq!(g.out_degree(NodeId(0), EdgeKind::Donate), 2);
        assert_eq!(
            g.neighbors(NodeId(0), EdgeKind::Donate, Direction::Out),
            &[NodeId(1)]
        );
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn two_hop_candidates() {
        use NodeKind::*;
        // v0 <- u0 donates; u0 follows u1; u2 unrelated
        let nodes = table(&[("v0", Video), ("u0", User), ("u1", User), ("u2", User)]);
        let g = HinGraph::build(
            nodes,
            vec![
                edge(1, 0, EdgeKind::Donate, 1),
                edge(1, 2, EdgeKind::Follow, 0),
            ],
        )
        .unwrap();
        let v0 = NodeId(0);
        assert_eq!(
            g.k_hop_candidates(v0, 2, false).unwrap(),
            vec![NodeId(1), NodeId(2)]
        );
        assert_eq!(g.k_hop_candidates(v0, 2, true).unwrap(), vec![NodeId(2)]);
        assert_eq!(g.k_hop_candidates(v0, 1, false).unwrap(), vec![NodeId(1)]);
        assert!(matches!(
            g.k_hop_candidates(NodeId(1), 2, false),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn isolated_video_has_no_candidates() {
        let nodes = table(&[("v0", NodeKind::Video), ("u0", NodeKind::User)]);
        let g = HinGraph::build(nodes, vec![]).unwrap();
        assert!(g.k_hop_candidates(NodeId(0), 2, false).unwrap().is_empty());
    }

    #[test]
    fn self_follow_is_a_schema_error() {
        let nodes = table(&[("u0", NodeKind::User)]);
        let err = HinGraph::build(nodes, vec![edge(0, 0, EdgeKind::Follow, 0)]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn ordinals_are_dense_per_kind() {
        use NodeKind::*;
        let nodes = table(&[("u0", User), ("v0", Video), ("u1", User), ("v1", Video)]);
        let g = HinGraph::build(nodes, vec![]).unwrap();
        assert_eq!(g.nodes_of_kind(User), &[NodeId(0), NodeId(2)]);
        assert_eq!(g.ordinal(NodeId(2)), 1);
        assert_eq!(g.ordinal(NodeId(3)), 1);
    }
}

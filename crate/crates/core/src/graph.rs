//! Time-like graph model: vertices with real times, forward directed multi-edges.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = u32;

/// Position of an edge in [`TimeLikeGraph::edges`]; used as the edge id in labels.
pub type EdgeIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    #[serde(default)]
    pub slot: u8,
}

impl Edge {
    pub fn new(from: VertexId, to: VertexId) -> Self {
        Edge { from, to, slot: 0 }
    }

    pub fn with_slot(from: VertexId, to: VertexId, slot: u8) -> Self {
        Edge { from, to, slot }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.slot == 0 {
            write!(f, "{}-{}", self.from, self.to)
        } else {
            write!(f, "{}-{}:{}", self.from, self.to, self.slot)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Strict,
    Relaxed,
}

/// On-disk JSON form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default)]
    pub mode: Mode,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuralError {
    #[error("graph has no vertices")]
    Empty,
    #[error("vertex id {0} appears more than once")]
    DuplicateVertex(VertexId),
    #[error("vertex {0} has a non-finite time")]
    NonFiniteTime(VertexId),
    #[error("edge {edge} references missing vertex {missing}")]
    DanglingEdge { edge: Edge, missing: VertexId },
    #[error("edge {0} is a loop")]
    SelfLoop(Edge),
    #[error("edge {0} has slot outside {{0,1}}")]
    BadSlot(Edge),
    #[error("edge {0} is listed twice")]
    DuplicateEdge(Edge),
}

/// A directed multigraph whose vertices carry times. Structural soundness
/// (ids resolve, finite times, no loops) is enforced on construction; the
/// degree rules are checked separately by [`crate::validate::validate_tlg`].
#[derive(Debug, Clone)]
pub struct TimeLikeGraph {
    mode: Mode,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    index: HashMap<VertexId, usize>,
    out_adj: Vec<Vec<EdgeIdx>>,
    in_adj: Vec<Vec<EdgeIdx>>,
}

impl TimeLikeGraph {
    pub fn new(
        vertices: Vec<Vertex>,
        edges: Vec<Edge>,
        mode: Mode,
    ) -> Result<Self, Vec<StructuralError>> {
        let mut errors = Vec::new();
        if vertices.is_empty() {
            errors.push(StructuralError::Empty);
        }
        let mut vertices = vertices;
        vertices.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.id.cmp(&b.id)));
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if !v.time.is_finite() {
                errors.push(StructuralError::NonFiniteTime(v.id));
            }
            if index.insert(v.id, i).is_some() {
                errors.push(StructuralError::DuplicateVertex(v.id));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            for end in [e.from, e.to] {
                if !index.contains_key(&end) {
                    errors.push(StructuralError::DanglingEdge { edge: *e, missing: end });
                }
            }
            if e.from == e.to {
                errors.push(StructuralError::SelfLoop(*e));
            }
            if e.slot > 1 {
                errors.push(StructuralError::BadSlot(*e));
            }
            if !seen.insert(*e) {
                errors.push(StructuralError::DuplicateEdge(*e));
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let n = vertices.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            out_adj[index[&e.from]].push(k);
            in_adj[index[&e.to]].push(k);
        }
        for list in out_adj.iter_mut() {
            list.sort_by_key(|&k| (edges[k].to, edges[k].slot));
        }
        for list in in_adj.iter_mut() {
            list.sort_by_key(|&k| (edges[k].from, edges[k].slot));
        }
        Ok(TimeLikeGraph { mode, vertices, edges, index, out_adj, in_adj })
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, Vec<StructuralError>> {
        Self::new(file.vertices.clone(), file.edges.clone(), file.mode)
    }

    pub fn from_json(text: &str) -> Result<Self, GraphLoadError> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::from_file(&file).map_err(GraphLoadError::Structural)
    }

    /// Builds a graph from `(id, time)` pairs and `(from, to)` pairs; repeated
    /// pairs receive slots 0 and 1 in order of appearance.
    pub fn from_pairs(
        vertices: &[(VertexId, f64)],
        edges: &[(VertexId, VertexId)],
        mode: Mode,
    ) -> Result<Self, Vec<StructuralError>> {
        let vs = vertices.iter().map(|&(id, time)| Vertex { id, time }).collect();
        let mut count: HashMap<(VertexId, VertexId), u8> = HashMap::new();
        let es = edges
            .iter()
            .map(|&(a, b)| {
                let c = count.entry((a, b)).or_insert(0);
                let e = Edge::with_slot(a, b, *c);
                *c += 1;
                e
            })
            .collect();
        Self::new(vs, es, mode)
    }

    pub fn to_file(&self) -> GraphFile {
        let mut vertices = self.vertices.clone();
        vertices.sort_by_key(|v| v.id);
        GraphFile { mode: self.mode, vertices, edges: self.edges.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        TimeLikeGraph { mode, ..self.clone() }
    }

    /// Vertices sorted by `(time, id)`; positions in this slice are vertex indices.
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ix(&self, id: VertexId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Index of a vertex id known to exist.
    pub fn vx(&self, id: VertexId) -> usize {
        self.index[&id]
    }

    pub fn id(&self, ix: usize) -> VertexId {
        self.vertices[ix].id
    }

    pub fn time(&self, ix: usize) -> f64 {
        self.vertices[ix].time
    }

    pub fn time_of(&self, id: VertexId) -> Option<f64> {
        self.ix(id).map(|i| self.vertices[i].time)
    }

    pub fn edge(&self, e: EdgeIdx) -> Edge {
        self.edges[e]
    }

    pub fn tail(&self, e: EdgeIdx) -> usize {
        self.index[&self.edges[e].from]
    }

    pub fn head(&self, e: EdgeIdx) -> usize {
        self.index[&self.edges[e].to]
    }

    pub fn edge_times(&self, e: EdgeIdx) -> (f64, f64) {
        (self.time(self.tail(e)), self.time(self.head(e)))
    }

    pub fn find_edge(&self, from: VertexId, to: VertexId, slot: u8) -> Option<EdgeIdx> {
        let a = self.ix(from)?;
        self.out_adj[a]
            .iter()
            .copied()
            .find(|&k| self.edges[k].to == to && self.edges[k].slot == slot)
    }

    pub fn out_edges(&self, ix: usize) -> &[EdgeIdx] {
        &self.out_adj[ix]
    }

    pub fn in_edges(&self, ix: usize) -> &[EdgeIdx] {
        &self.in_adj[ix]
    }

    pub fn degree(&self, ix: usize) -> usize {
        self.out_adj[ix].len() + self.in_adj[ix].len()
    }

    /// Earliest vertex (the initial vertex of a valid TLG).
    pub fn initial(&self) -> usize {
        0
    }

    /// Latest vertex (the terminal vertex of a valid TLG).
    pub fn terminal(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Negates all times and flips every edge.
    pub fn reverse(&self) -> Self {
        let vs = self.vertices.iter().map(|v| Vertex { id: v.id, time: -v.time }).collect();
        let es = self
            .edges
            .iter()
            .map(|e| Edge { from: e.to, to: e.from, slot: e.slot })
            .collect();
        Self::new(vs, es, self.mode).expect("reversal preserves structure")
    }

    /// Copy with the listed edges removed (slot-exact match); mode becomes relaxed.
    pub fn without_edges(&self, removed: &[Edge]) -> Self {
        let es = self.edges.iter().copied().filter(|e| !removed.contains(e)).collect();
        Self::new(self.vertices.clone(), es, Mode::Relaxed).expect("subgraph stays structural")
    }

    /// Copy with vertex times replaced via `f(id, old_time)`.
    pub fn map_times(&self, f: impl Fn(VertexId, f64) -> f64) -> Self {
        let vs = self.vertices.iter().map(|v| Vertex { id: v.id, time: f(v.id, v.time) }).collect();
        Self::new(vs, self.edges.clone(), self.mode).expect("retiming preserves structure")
    }

    /// Multiset of edges keyed by `(from, to)` with multiplicities; slot-agnostic.
    pub fn edge_multiset(&self) -> Vec<(VertexId, VertexId)> {
        let mut v: Vec<_> = self.edges.iter().map(|e| (e.from, e.to)).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Error)]
pub enum GraphLoadError {
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("structural errors: {}", join_errors(.0))]
    Structural(Vec<StructuralError>),
}

fn join_errors(errs: &[StructuralError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

//! Time paths, full-path enumeration and reachability.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeIdx, TimeLikeGraph, VertexId};

/// Default guard on enumeration output sizes.
pub const DEFAULT_PATH_CAP: usize = 100_000;

/// A directed path listed by vertex ids; `slots[i]` picks the parallel edge
/// between `vertices[i]` and `vertices[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimePath {
    pub vertices: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("enumeration exceeded the cap of {cap} items")]
    CapExceeded { cap: usize },
    #[error("path is empty")]
    Empty,
    #[error("no edge {from}->{to} (slot {slot})")]
    MissingEdge { from: VertexId, to: VertexId, slot: u8 },
}

impl TimePath {
    pub fn new(vertices: Vec<VertexId>) -> Self {
        TimePath { vertices, slots: Vec::new() }
    }

    pub fn with_slots(vertices: Vec<VertexId>, slots: Vec<u8>) -> Self {
        let mut p = TimePath { vertices, slots };
        p.normalize();
        p
    }

    /// Builds the path traversing the given edges in order.
    pub fn from_edges(g: &TimeLikeGraph, edges: &[EdgeIdx]) -> Self {
        let mut vertices = Vec::with_capacity(edges.len() + 1);
        let mut slots = Vec::with_capacity(edges.len());
        for (i, &k) in edges.iter().enumerate() {
            let e = g.edge(k);
            if i == 0 {
                vertices.push(e.from);
            }
            vertices.push(e.to);
            slots.push(e.slot);
        }
        Self::with_slots(vertices, slots)
    }

    /// Drops an all-zero slot list so paths compare equal regardless of form.
    fn normalize(&mut self) {
        if self.slots.iter().all(|&s| s == 0) {
            self.slots.clear();
        }
    }

    pub fn slot(&self, i: usize) -> u8 {
        self.slots.get(i).copied().unwrap_or(0)
    }

    pub fn start(&self) -> VertexId {
        self.vertices[0]
    }

    pub fn end(&self) -> VertexId {
        *self.vertices.last().expect("non-empty path")
    }

    pub fn interior(&self) -> &[VertexId] {
        let n = self.vertices.len();
        if n <= 2 {
            &[]
        } else {
            &self.vertices[1..n - 1]
        }
    }

    pub fn len_edges(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// Resolves the path to edge indices, checking every hop exists.
    pub fn edges(&self, g: &TimeLikeGraph) -> Result<Vec<EdgeIdx>, PathError> {
        if self.vertices.is_empty() {
            return Err(PathError::Empty);
        }
        (0..self.len_edges())
            .map(|i| {
                let (from, to, slot) = (self.vertices[i], self.vertices[i + 1], self.slot(i));
                g.find_edge(from, to, slot).ok_or(PathError::MissingEdge { from, to, slot })
            })
            .collect()
    }

    pub fn is_full(&self, g: &TimeLikeGraph) -> bool {
        self.edges(g).is_ok()
            && g.ix(self.start()) == Some(g.initial())
            && g.ix(self.end()) == Some(g.terminal())
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.contains(&id)
    }
}

/// All full time paths (initial to terminal vertex), in lexicographic DFS order.
pub fn full_time_paths(g: &TimeLikeGraph, cap: usize) -> Result<Vec<TimePath>, PathError> {
    paths_between(g, g.initial(), Some(g.terminal()), cap)
}

/// All time paths from `from` that end at `to` (or at any vertex when `to` is
/// `None`, excluding the trivial one-vertex path).
pub fn paths_between(
    g: &TimeLikeGraph,
    from: usize,
    to: Option<usize>,
    cap: usize,
) -> Result<Vec<TimePath>, PathError> {
    let mut out = Vec::new();
    let mut stack: Vec<EdgeIdx> = Vec::new();
    dfs(g, from, to, &mut stack, &mut out, cap)?;
    Ok(out)
}

fn dfs(
    g: &TimeLikeGraph,
    at: usize,
    to: Option<usize>,
    stack: &mut Vec<EdgeIdx>,
    out: &mut Vec<TimePath>,
    cap: usize,
) -> Result<(), PathError> {
    let done = match to {
        Some(t) => at == t,
        None => !stack.is_empty(),
    };
    if done {
        if out.len() >= cap {
            return Err(PathError::CapExceeded { cap });
        }
        out.push(TimePath::from_edges(g, stack));
        if to.is_some() {
            return Ok(());
        }
    }
    for &k in g.out_edges(at) {
        stack.push(k);
        dfs(g, g.head(k), to, stack, out, cap)?;
        stack.pop();
    }
    Ok(())
}

/// Reflexive forward and backward reachability between vertex indices.
#[derive(Debug, Clone)]
pub struct Reach {
    fwd: Vec<FixedBitSet>,
    bwd: Vec<FixedBitSet>,
}

impl Reach {
    /// Requires vertex index order to be topological, which holds whenever
    /// every edge increases in time.
    pub fn new(g: &TimeLikeGraph) -> Self {
        let n = g.vertex_count();
        let mut fwd = vec![FixedBitSet::with_capacity(n); n];
        for v in (0..n).rev() {
            let mut set = FixedBitSet::with_capacity(n);
            set.insert(v);
            for &k in g.out_edges(v) {
                set.union_with(&fwd[g.head(k)]);
            }
            fwd[v] = set;
        }
        let mut bwd = vec![FixedBitSet::with_capacity(n); n];
        for v in 0..n {
            let mut set = FixedBitSet::with_capacity(n);
            set.insert(v);
            for &k in g.in_edges(v) {
                set.union_with(&bwd[g.tail(k)]);
            }
            bwd[v] = set;
        }
        Reach { fwd, bwd }
    }

    /// Whether a (possibly trivial) time path runs from `a` to `b`.
    pub fn reaches(&self, a: usize, b: usize) -> bool {
        self.fwd[a].contains(b)
    }

    pub fn descendants(&self, a: usize) -> &FixedBitSet {
        &self.fwd[a]
    }

    pub fn ancestors(&self, a: usize) -> &FixedBitSet {
        &self.bwd[a]
    }
}

/// Shortest (fewest edges) path from `a` to `b` using only edges accepted by
/// `allow`; ties resolved towards smaller `(to, slot)`.
pub fn find_path(
    g: &TimeLikeGraph,
    a: usize,
    b: usize,
    allow: impl Fn(EdgeIdx) -> bool,
) -> Option<Vec<EdgeIdx>> {
    let n = g.vertex_count();
    let mut via: Vec<Option<EdgeIdx>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([a]);
    seen[a] = true;
    while let Some(v) = queue.pop_front() {
        if v == b {
            let mut edges = Vec::new();
            let mut cur = b;
            while let Some(k) = via[cur] {
                edges.push(k);
                cur = g.tail(k);
            }
            edges.reverse();
            return Some(edges);
        }
        for &k in g.out_edges(v) {
            let w = g.head(k);
            if !seen[w] && allow(k) {
                seen[w] = true;
                via[w] = Some(k);
                queue.push_back(w);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn minimal_graph_has_one_full_path() {
        let paths = full_time_paths(&fixtures::minimal(), DEFAULT_PATH_CAP).unwrap();
        assert_eq!(paths, vec![TimePath::new(vec![0, 1])]);
    }

    #[test]
    fn fig2_has_four_full_paths() {
        let g = fixtures::fig2();
        let paths = full_time_paths(&g, DEFAULT_PATH_CAP).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(paths.iter().all(|p| p.is_full(&g)));
    }

    #[test]
    fn fig1_full_paths_run_end_to_end() {
        let g = fixtures::fig1();
        let paths = full_time_paths(&g, DEFAULT_PATH_CAP).unwrap();
        assert!(!paths.is_empty());
        for p in &paths {
            assert_eq!(p.start(), 0);
            assert_eq!(p.end(), 7);
        }
        let covered: std::collections::BTreeSet<_> = paths.iter().flat_map(|p| p.vertices.clone()).collect();
        assert_eq!(covered.len(), 8);
    }

    #[test]
    fn cap_is_reported() {
        let err = full_time_paths(&fixtures::fig2(), 3).unwrap_err();
        assert_eq!(err, PathError::CapExceeded { cap: 3 });
    }

    #[test]
    fn parallel_paths_keep_slots() {
        let g = fixtures::parallel_edge();
        let paths = full_time_paths(&g, 10).unwrap();
        assert_eq!(paths.len(), 2);
        assert_ne!(paths[0], paths[1]);
    }

    #[test]
    fn reach_is_reflexive_and_transitive() {
        let g = fixtures::fig1();
        let r = Reach::new(&g);
        for a in 0..g.vertex_count() {
            assert!(r.reaches(a, a));
            assert!(r.reaches(g.initial(), a));
            assert!(r.reaches(a, g.terminal()));
        }
        assert!(!r.reaches(g.vx(4), g.vx(2)));
    }
}

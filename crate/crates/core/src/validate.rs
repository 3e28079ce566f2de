//! Degree and ordering rules for strict and relaxed time-like graphs, plus
//! collapsing of degree-2 chains.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::graph::{Edge, EdgeIdx, GraphFile, Mode, StructuralError, TimeLikeGraph, Vertex, VertexId};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Structural { message: String },
    TooFewVertices { count: usize },
    EdgeNotForward { edge: Edge },
    TooManyParallel { from: VertexId, to: VertexId, count: usize },
    EndpointCount { degree_one: Vec<VertexId> },
    Degree { vertex: VertexId, degree: usize },
    NoIncoming { vertex: VertexId },
    NoOutgoing { vertex: VertexId },
    EndpointNotExtreme { vertex: VertexId },
    NotOnFullPath { vertex: VertexId },
    /// A violation found after collapsing degree-2 chains (relaxed mode).
    Collapsed { inner: Box<Violation> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Structural { message } => write!(f, "structural: {message}"),
            Violation::TooFewVertices { count } => write!(f, "only {count} vertices"),
            Violation::EdgeNotForward { edge } => write!(f, "edge {edge} does not increase in time"),
            Violation::TooManyParallel { from, to, count } => {
                write!(f, "{count} parallel edges between {from} and {to}")
            }
            Violation::EndpointCount { degree_one } => {
                write!(f, "expected two degree-1 vertices, found {degree_one:?}")
            }
            Violation::Degree { vertex, degree } => write!(f, "vertex {vertex} has degree {degree}"),
            Violation::NoIncoming { vertex } => write!(f, "internal vertex {vertex} has no incoming edge"),
            Violation::NoOutgoing { vertex } => write!(f, "internal vertex {vertex} has no outgoing edge"),
            Violation::EndpointNotExtreme { vertex } => {
                write!(f, "endpoint {vertex} is not strictly earliest/latest")
            }
            Violation::NotOnFullPath { vertex } => write!(f, "vertex {vertex} lies on no full time path"),
            Violation::Collapsed { inner } => write!(f, "after chain collapse: {inner}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validates a raw file, reporting structural problems instead of failing.
pub fn validate_file(file: &GraphFile, mode: Mode) -> ValidationReport {
    match TimeLikeGraph::from_file(file) {
        Ok(g) => validate_tlg(&g, mode),
        Err(errs) => ValidationReport {
            violations: errs
                .iter()
                .map(|e: &StructuralError| Violation::Structural { message: e.to_string() })
                .collect(),
        },
    }
}

pub fn validate_tlg(g: &TimeLikeGraph, mode: Mode) -> ValidationReport {
    let mut v = basic_violations(g, mode);
    if mode == Mode::Relaxed && v.is_empty() {
        let collapsed = collapse(g);
        for &(from, to, count) in &collapsed.overflow {
            v.push(Violation::Collapsed { inner: Box::new(Violation::TooManyParallel { from, to, count }) });
        }
        for inner in validate_tlg(&collapsed.graph, Mode::Strict).violations {
            v.push(Violation::Collapsed { inner: Box::new(inner) });
        }
    }
    ValidationReport { violations: v }
}

fn basic_violations(g: &TimeLikeGraph, mode: Mode) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = g.vertex_count();
    if n < 2 {
        out.push(Violation::TooFewVertices { count: n });
        return out;
    }
    let mut pairs: BTreeMap<(VertexId, VertexId), usize> = BTreeMap::new();
    for (k, e) in g.edges().iter().enumerate() {
        let (s, t) = g.edge_times(k);
        if s >= t {
            out.push(Violation::EdgeNotForward { edge: *e });
        }
        *pairs.entry((e.from, e.to)).or_default() += 1;
    }
    for ((from, to), count) in pairs {
        if count > 2 {
            out.push(Violation::TooManyParallel { from, to, count });
        }
    }

    let mut degree_one = Vec::new();
    for ix in 0..n {
        let id = g.id(ix);
        let (din, dout) = (g.in_edges(ix).len(), g.out_edges(ix).len());
        let d = din + dout;
        match d {
            1 => degree_one.push(ix),
            3 => {}
            2 if mode == Mode::Relaxed => {}
            _ => out.push(Violation::Degree { vertex: id, degree: d }),
        }
        if d > 1 {
            if din == 0 {
                out.push(Violation::NoIncoming { vertex: id });
            }
            if dout == 0 {
                out.push(Violation::NoOutgoing { vertex: id });
            }
        }
    }
    let sources: Vec<usize> = degree_one.iter().copied().filter(|&i| g.out_edges(i).len() == 1).collect();
    let sinks: Vec<usize> = degree_one.iter().copied().filter(|&i| g.in_edges(i).len() == 1).collect();
    if degree_one.len() != 2 || sources.len() != 1 || sinks.len() != 1 {
        out.push(Violation::EndpointCount { degree_one: degree_one.iter().map(|&i| g.id(i)).collect() });
    }
    for &s in &sources {
        if (0..n).any(|i| i != s && g.time(i) <= g.time(s)) {
            out.push(Violation::EndpointNotExtreme { vertex: g.id(s) });
        }
    }
    for &s in &sinks {
        if (0..n).any(|i| i != s && g.time(i) >= g.time(s)) {
            out.push(Violation::EndpointNotExtreme { vertex: g.id(s) });
        }
    }

    let start = sources.first().copied().unwrap_or(g.initial());
    let end = sinks.first().copied().unwrap_or(g.terminal());
    let fwd = sweep(g, start, true);
    let bwd = sweep(g, end, false);
    for ix in 0..n {
        if !(fwd[ix] && bwd[ix]) {
            out.push(Violation::NotOnFullPath { vertex: g.id(ix) });
        }
    }
    out
}

/// Plain graph search along (or against) edge direction.
fn sweep(g: &TimeLikeGraph, from: usize, forward: bool) -> Vec<bool> {
    let mut seen = vec![false; g.vertex_count()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        let edges = if forward { g.out_edges(v) } else { g.in_edges(v) };
        for &k in edges {
            let w = if forward { g.head(k) } else { g.tail(k) };
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// A relaxed graph with its degree-2 pass-through vertices folded into edges.
#[derive(Debug, Clone)]
pub struct CollapsedGraph {
    pub graph: TimeLikeGraph,
    /// For each collapsed edge, the removed interior vertices in time order.
    pub chains: Vec<Vec<Vertex>>,
    /// For each collapsed edge, the original edges it replaces.
    pub origin: Vec<Vec<EdgeIdx>>,
    /// Endpoint pairs joined by more than two chains (dropped from `graph`).
    pub overflow: Vec<(VertexId, VertexId, usize)>,
}

impl CollapsedGraph {
    /// Locates an original vertex: either a kept vertex or a chain interior
    /// `(collapsed edge, position within the chain)`.
    pub fn locate(&self, id: VertexId) -> Option<Located> {
        if self.graph.ix(id).is_some() {
            return Some(Located::Vertex(id));
        }
        self.chains.iter().enumerate().find_map(|(e, chain)| {
            chain.iter().position(|v| v.id == id).map(|p| Located::Interior { edge: e, position: p })
        })
    }

    /// Collapsed edge containing an original edge.
    pub fn edge_of(&self, original: EdgeIdx) -> Option<EdgeIdx> {
        self.origin.iter().position(|list| list.contains(&original))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Located {
    Vertex(VertexId),
    Interior { edge: EdgeIdx, position: usize },
}

fn is_pass_through(g: &TimeLikeGraph, ix: usize) -> bool {
    g.in_edges(ix).len() == 1 && g.out_edges(ix).len() == 1
}

/// Folds every vertex with exactly one incoming and one outgoing edge into
/// the surrounding edge. The result is in strict mode (validity not implied).
pub fn collapse(g: &TimeLikeGraph) -> CollapsedGraph {
    let n = g.vertex_count();
    let kept: Vec<usize> = (0..n).filter(|&ix| !is_pass_through(g, ix)).collect();
    let mut edges = Vec::new();
    let mut chains = Vec::new();
    let mut origin = Vec::new();
    let mut slots: HashMap<(VertexId, VertexId), u8> = HashMap::new();
    for &a in &kept {
        for &k in g.out_edges(a) {
            let mut chain = Vec::new();
            let mut used = vec![k];
            let mut cur = g.head(k);
            while is_pass_through(g, cur) {
                chain.push(g.vertices()[cur]);
                let next = g.out_edges(cur)[0];
                used.push(next);
                cur = g.head(next);
            }
            let key = (g.id(a), g.id(cur));
            let slot = slots.entry(key).or_insert(0);
            edges.push(Edge::with_slot(key.0, key.1, *slot));
            *slot = slot.saturating_add(1);
            chains.push(chain);
            origin.push(used);
        }
    }
    let overflow: Vec<_> = slots
        .iter()
        .filter(|(_, &c)| c > 2)
        .map(|(&(a, b), &c)| (a, b, c as usize))
        .collect();
    if !overflow.is_empty() {
        let keep: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].slot <= 1).collect();
        edges = keep.iter().map(|&k| edges[k]).collect();
        chains = keep.iter().map(|&k| chains[k].clone()).collect();
        origin = keep.iter().map(|&k| origin[k].clone()).collect();
    }
    let vertices = kept.iter().map(|&ix| g.vertices()[ix]).collect();
    let graph = TimeLikeGraph::new(vertices, edges, Mode::Strict).expect("collapse is structural");
    CollapsedGraph { graph, chains, origin, overflow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn minimal_graph_is_valid() {
        assert!(validate_tlg(&fixtures::minimal(), Mode::Strict).is_valid());
    }

    #[test]
    fn fig1_is_valid() {
        assert!(validate_tlg(&fixtures::fig1(), Mode::Strict).is_valid());
    }

    #[test]
    fn fig1_without_e14_reports_degree_two_vertices() {
        let g = fixtures::fig1().without_edges(&[Edge::new(1, 4)]);
        let report = validate_tlg(&g, Mode::Strict);
        let bad: Vec<_> = report
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::Degree { vertex, degree: 2 } => Some(*vertex),
                _ => None,
            })
            .collect();
        assert_eq!(bad, vec![1, 4]);
    }

    #[test]
    fn relaxed_accepts_pass_through_vertices() {
        let g = fixtures::fig1().without_edges(&[Edge::new(1, 4)]);
        assert!(validate_tlg(&g, Mode::Relaxed).violations.iter().all(|v| matches!(v, Violation::Collapsed { .. })) );
        let c = collapse(&g);
        assert_eq!(c.graph.vertex_count(), 6);
        assert!(c.chains.iter().any(|ch| ch.iter().map(|v| v.id).collect::<Vec<_>>() == vec![1]));
    }

    #[test]
    fn backward_edge_is_reported() {
        let g = TimeLikeGraph::from_pairs(&[(0, 1.0), (1, 0.0)], &[(0, 1)], Mode::Strict).unwrap();
        let r = validate_tlg(&g, Mode::Strict);
        assert!(r.violations.contains(&Violation::EdgeNotForward { edge: Edge::new(0, 1) }));
    }

    #[test]
    fn dangling_file_is_structural_not_panic() {
        let file = GraphFile {
            mode: Mode::Strict,
            vertices: vec![Vertex { id: 0, time: 0.0 }],
            edges: vec![Edge::new(0, 4)],
        };
        let r = validate_file(&file, Mode::Strict);
        assert!(matches!(r.violations[0], Violation::Structural { .. }));
    }

    #[test]
    fn three_parallel_chains_rejected_after_collapse() {
        let g = TimeLikeGraph::from_pairs(
            &[(0, 0.0), (1, 0.1), (2, 0.4), (3, 0.5), (4, 0.6), (5, 0.9), (6, 1.0)],
            &[(0, 1), (1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5), (5, 6)],
            Mode::Relaxed,
        )
        .unwrap();
        let r = validate_tlg(&g, Mode::Relaxed);
        assert!(!r.is_valid());
    }
}

//! The no-coterminal-cells decision.

use std::collections::BTreeMap;

use petgraph::algo::ford_fulkerson;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::cells::{find_cells, Cell, CellError, CellStructure};
use crate::graph::{TimeLikeGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictKind {
    /// Two forward-minimal cells with a common end and different starts.
    Forward,
    /// Two backward-minimal cells with a common start and different ends.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ncc", rename_all = "lowercase")]
pub enum NccVerdict {
    #[serde(rename = "true")]
    Ncc,
    #[serde(rename = "false")]
    NotNcc { kind: ConflictKind, witness: Box<(Cell, Cell)> },
}

impl NccVerdict {
    pub fn is_ncc(&self) -> bool {
        matches!(self, NccVerdict::Ncc)
    }

    pub fn witness(&self) -> Option<&(Cell, Cell)> {
        match self {
            NccVerdict::Ncc => None,
            NccVerdict::NotNcc { witness, .. } => Some(witness),
        }
    }
}

/// Decides NCC from reachability sets; forward conflicts are reported first,
/// earliest end (then smallest id) first.
pub fn is_ncc(g: &TimeLikeGraph) -> NccVerdict {
    is_ncc_with(g, &CellStructure::new(g))
}

pub fn is_ncc_with(g: &TimeLikeGraph, st: &CellStructure) -> NccVerdict {
    let n = g.vertex_count();
    let mut starts_by_end: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        for &e in &st.forward_ends[s] {
            starts_by_end[e].push(s);
        }
    }
    for (e, starts) in starts_by_end.iter().enumerate() {
        if let [s1, s2, ..] = starts[..] {
            let w = (st.forward_cell(g, s1, e), st.forward_cell(g, s2, e));
            return NccVerdict::NotNcc { kind: ConflictKind::Forward, witness: Box::new(w) };
        }
    }
    let mut ends_by_start: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in 0..n {
        for &s in &st.backward_starts[e] {
            ends_by_start[s].push(e);
        }
    }
    for (s, ends) in ends_by_start.iter().enumerate() {
        if let [e1, e2, ..] = ends[..] {
            let w = (st.backward_cell(g, s, e1), st.backward_cell(g, s, e2));
            return NccVerdict::NotNcc { kind: ConflictKind::Backward, witness: Box::new(w) };
        }
    }
    NccVerdict::Ncc
}

/// Independent decider built on exhaustive cell enumeration.
pub fn is_ncc_by_enumeration(g: &TimeLikeGraph, cap: usize) -> Result<bool, CellError> {
    let cells = find_cells(g, cap)?;
    let mut fwd: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    let mut bwd: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    for c in &cells {
        if c.flags.forward_minimal {
            fwd.entry(c.end).or_default().push(c.start);
        }
        if c.flags.backward_minimal {
            bwd.entry(c.start).or_default().push(c.end);
        }
    }
    let conflict = |m: &BTreeMap<VertexId, Vec<VertexId>>| {
        m.values().any(|v| v.iter().any(|&x| x != v[0]))
    };
    Ok(!(conflict(&fwd) || conflict(&bwd)))
}

/// Whether some cell runs from `s` to `e`: two internally vertex-disjoint
/// time paths, found as a unit-vertex-capacity flow of value 2.
pub fn has_cell(g: &TimeLikeGraph, s: VertexId, e: VertexId) -> bool {
    let (Some(s), Some(e)) = (g.ix(s), g.ix(e)) else {
        return false;
    };
    if s == e {
        return false;
    }
    let n = g.vertex_count();
    let mut net: DiGraph<(), u32> = DiGraph::new();
    let ins: Vec<_> = (0..n).map(|_| net.add_node(())).collect();
    let outs: Vec<_> = (0..n).map(|_| net.add_node(())).collect();
    for v in 0..n {
        let cap = if v == s || v == e { 2 } else { 1 };
        net.add_edge(ins[v], outs[v], cap);
    }
    for k in 0..g.edge_count() {
        net.add_edge(outs[g.tail(k)], ins[g.head(k)], 1);
    }
    let (flow, _) = ford_fulkerson(&net, outs[s], ins[e]);
    flow >= 2
}

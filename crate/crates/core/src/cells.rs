//! Cells: pairs of co-terminal time paths with disjoint interiors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeIdx, TimeLikeGraph, VertexId};
use crate::paths::{find_path, paths_between, PathError, Reach, TimePath};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFlags {
    pub simple: bool,
    pub forward_minimal: bool,
    pub backward_minimal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub path_a: TimePath,
    pub path_b: TimePath,
    pub start: VertexId,
    pub end: VertexId,
    pub flags: CellFlags,
}

impl Cell {
    /// Orders the two paths canonically so unordered pairs compare equal.
    pub fn new(a: TimePath, b: TimePath) -> Self {
        let (path_a, path_b) = if a <= b { (a, b) } else { (b, a) };
        let (start, end) = (path_a.start(), path_a.end());
        Cell { path_a, path_b, start, end, flags: CellFlags::default() }
    }

    /// Same unordered pair of paths, ignoring flags.
    pub fn same_paths(&self, other: &Cell) -> bool {
        self.path_a == other.path_a && self.path_b == other.path_b
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("not a cell: {0}")]
    NotACell(&'static str),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Per-vertex minimal cell ends and maximal cell starts, derived from
/// reachability: for a start `s` with out-neighbours `x1, x2`, the cell ends
/// are exactly the vertices of `Reach(x1) ∩ Reach(x2)`, and the earliest of
/// those are the forward-minimal ends.
#[derive(Debug, Clone)]
pub struct CellStructure {
    pub reach: Reach,
    /// For each vertex index with two outgoing edges: forward-minimal ends.
    pub forward_ends: Vec<Vec<usize>>,
    /// For each vertex index with two incoming edges: backward-minimal starts.
    pub backward_starts: Vec<Vec<usize>>,
}

impl CellStructure {
    pub fn new(g: &TimeLikeGraph) -> Self {
        let reach = Reach::new(g);
        let n = g.vertex_count();
        let mut forward_ends = vec![Vec::new(); n];
        let mut backward_starts = vec![Vec::new(); n];
        for s in 0..n {
            if let [k1, k2, ..] = g.out_edges(s) {
                let mut common = reach.descendants(g.head(*k1)).clone();
                common.intersect_with(reach.descendants(g.head(*k2)));
                forward_ends[s] = extreme(g, common.ones(), true);
            }
            if let [k1, k2, ..] = g.in_edges(s) {
                let mut common = reach.ancestors(g.tail(*k1)).clone();
                common.intersect_with(reach.ancestors(g.tail(*k2)));
                backward_starts[s] = extreme(g, common.ones(), false);
            }
        }
        CellStructure { reach, forward_ends, backward_starts }
    }

    pub fn min_end_time(&self, g: &TimeLikeGraph, s: usize) -> Option<f64> {
        self.forward_ends[s].first().map(|&e| g.time(e))
    }

    pub fn max_start_time(&self, g: &TimeLikeGraph, e: usize) -> Option<f64> {
        self.backward_starts[e].first().map(|&s| g.time(s))
    }

    /// A cell from `s` to `e`, where `e` is a forward-minimal end of `s`.
    pub fn forward_cell(&self, g: &TimeLikeGraph, s: usize, e: usize) -> Cell {
        let paths = g.out_edges(s)[..2].iter().map(|&k| {
            let rest = find_path(g, g.head(k), e, |_| true).expect("end reachable from both branches");
            let mut edges = vec![k];
            edges.extend(rest);
            TimePath::from_edges(g, &edges)
        });
        let (a, b) = two(paths);
        self.annotate(g, Cell::new(a, b))
    }

    /// A cell from `s` to `e`, where `s` is a backward-minimal start of `e`.
    pub fn backward_cell(&self, g: &TimeLikeGraph, s: usize, e: usize) -> Cell {
        let paths = g.in_edges(e)[..2].iter().map(|&k| {
            let mut edges: Vec<EdgeIdx> =
                find_path(g, s, g.tail(k), |_| true).expect("start reaches both branches");
            edges.push(k);
            TimePath::from_edges(g, &edges)
        });
        let (a, b) = two(paths);
        self.annotate(g, Cell::new(a, b))
    }

    fn annotate(&self, g: &TimeLikeGraph, mut cell: Cell) -> Cell {
        cell.flags = self.flags(g, &cell);
        cell
    }

    fn flags(&self, g: &TimeLikeGraph, cell: &Cell) -> CellFlags {
        let (s, e) = (g.vx(cell.start), g.vx(cell.end));
        let ia: Vec<usize> = cell.path_a.interior().iter().map(|&v| g.vx(v)).collect();
        let ib: Vec<usize> = cell.path_b.interior().iter().map(|&v| g.vx(v)).collect();
        let connected = ia
            .iter()
            .any(|&a| ib.iter().any(|&b| self.reach.reaches(a, b) || self.reach.reaches(b, a)));
        CellFlags {
            simple: !connected,
            forward_minimal: self.min_end_time(g, s) == Some(g.time(e)),
            backward_minimal: self.max_start_time(g, e) == Some(g.time(s)),
        }
    }
}

fn two<T>(mut it: impl Iterator<Item = T>) -> (T, T) {
    let a = it.next().expect("two items");
    let b = it.next().expect("two items");
    (a, b)
}

/// Vertices of `set` attaining the minimum (or maximum) time, in index order.
fn extreme(g: &TimeLikeGraph, set: impl Iterator<Item = usize>, min: bool) -> Vec<usize> {
    let items: Vec<usize> = set.collect();
    let pick = items.iter().map(|&v| g.time(v)).fold(None, |acc: Option<f64>, t| match acc {
        None => Some(t),
        Some(a) if (min && t < a) || (!min && t > a) => Some(t),
        other => other,
    });
    match pick {
        None => Vec::new(),
        Some(t) => items.into_iter().filter(|&v| g.time(v) == t).collect(),
    }
}

/// Checks membership and computes the flags of `cell`.
pub fn classify_cell(g: &TimeLikeGraph, cell: &Cell) -> Result<CellFlags, CellError> {
    check_cell(g, &cell.path_a, &cell.path_b)?;
    Ok(CellStructure::new(g).flags(g, cell))
}

fn check_cell(g: &TimeLikeGraph, a: &TimePath, b: &TimePath) -> Result<(), CellError> {
    a.edges(g)?;
    b.edges(g)?;
    if a.start() != b.start() || a.end() != b.end() {
        return Err(CellError::NotACell("paths are not co-terminal"));
    }
    if a == b {
        return Err(CellError::NotACell("paths coincide"));
    }
    if a.interior().iter().any(|v| b.interior().contains(v)) {
        return Err(CellError::NotACell("interiors intersect"));
    }
    Ok(())
}

/// Enumerates every cell by DFS over time paths from each branching vertex.
/// `cap` bounds the number of paths examined per start vertex and the output.
pub fn find_cells(g: &TimeLikeGraph, cap: usize) -> Result<Vec<Cell>, CellError> {
    let structure = CellStructure::new(g);
    let mut out = Vec::new();
    for s in 0..g.vertex_count() {
        if g.out_edges(s).len() < 2 {
            continue;
        }
        let mut by_end: BTreeMap<VertexId, Vec<TimePath>> = BTreeMap::new();
        for p in paths_between(g, s, None, cap)? {
            by_end.entry(p.end()).or_default().push(p);
        }
        for paths in by_end.values() {
            for i in 0..paths.len() {
                for j in i + 1..paths.len() {
                    if check_cell(g, &paths[i], &paths[j]).is_ok() {
                        if out.len() >= cap {
                            return Err(PathError::CapExceeded { cap }.into());
                        }
                        out.push(structure.annotate(g, Cell::new(paths[i].clone(), paths[j].clone())));
                    }
                }
            }
        }
    }
    Ok(out)
}

//! The construction plan shared by the exact field and the sampler: every
//! sample point is introduced once, as an affine function of at most two
//! earlier points plus one fresh Gaussian.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{GridError, SampleGrid, SamplePoint};
use super::law::{Conditional, Law};
use crate::cells::Cell;
use crate::graph::{EdgeIdx, TimeLikeGraph};
use crate::paths::Reach;
use crate::tower::{resolve_segments, verify_tower, Tower, TowerReport};

/// Dense index of a sample point: vertex indices first, then edge interiors.
pub type PointId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("graph is not NCC")]
    NotNcc { witness: Box<(Cell, Cell)> },
    #[error("tower does not verify: {0:?}")]
    InvalidTower(TowerReport),
    #[error("bridge between equal times in step {step}")]
    DegenerateBridge { step: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Order in which the interior points of one bridge are introduced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeOrder {
    #[default]
    LeftToRight,
    RightToLeft,
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Vertex(usize),
    Interior(SamplePoint),
}

/// Point indexing over a graph and grid.
#[derive(Debug, Clone)]
pub struct PointTable {
    graph: TimeLikeGraph,
    grid: SampleGrid,
    offsets: Vec<usize>,
    locations: Vec<Location>,
    times: Vec<f64>,
}

impl PointTable {
    pub fn new(g: &TimeLikeGraph, grid: &SampleGrid) -> Result<Self, GridError> {
        grid.check(g)?;
        let n = g.vertex_count();
        let mut locations: Vec<Location> = (0..n).map(Location::Vertex).collect();
        let mut times: Vec<f64> = (0..n).map(|ix| g.time(ix)).collect();
        let mut offsets = Vec::with_capacity(g.edge_count());
        for (k, list) in grid.times.iter().enumerate() {
            offsets.push(locations.len());
            for (i, &t) in list.iter().enumerate().take(list.len() - 1).skip(1) {
                locations.push(Location::Interior(SamplePoint { edge: k, index: i }));
                times.push(t);
            }
        }
        Ok(PointTable { graph: g.clone(), grid: grid.clone(), offsets, locations, times })
    }

    pub fn graph(&self) -> &TimeLikeGraph {
        &self.graph
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn time(&self, p: PointId) -> f64 {
        self.times[p]
    }

    pub fn location(&self, p: PointId) -> Location {
        self.locations[p]
    }

    /// Point at a grid position; endpoints map to the shared vertex point.
    pub fn point(&self, sp: SamplePoint) -> Option<PointId> {
        let list = self.grid.times.get(sp.edge)?;
        if sp.index == 0 {
            Some(self.graph.tail(sp.edge))
        } else if sp.index + 1 == list.len() {
            Some(self.graph.head(sp.edge))
        } else if sp.index < list.len() {
            Some(self.offsets[sp.edge] + sp.index - 1)
        } else {
            None
        }
    }

    pub fn vertex(&self, ix: usize) -> PointId {
        ix
    }

    /// All points of an edge in time order, endpoints included.
    pub fn edge_points(&self, k: EdgeIdx) -> Vec<PointId> {
        (0..self.grid.times[k].len())
            .map(|i| self.point(SamplePoint { edge: k, index: i }).expect("index in range"))
            .collect()
    }

    /// `v:<id>` for vertices, `<edge>:<index>` for interior points.
    pub fn label(&self, p: PointId) -> String {
        match self.locations[p] {
            Location::Vertex(ix) => format!("v:{}", self.graph.id(ix)),
            Location::Interior(sp) => format!("{}:{}", sp.edge, sp.index),
        }
    }

    /// Points `q` such that some full time path visits `p` and then `q`
    /// (strictly later along it). With `forward = false`, the past.
    pub fn related(&self, reach: &Reach, p: PointId, forward: bool) -> Vec<PointId> {
        let g = &self.graph;
        let (pivot, same_edge) = match self.locations[p] {
            Location::Vertex(ix) => (ix, None),
            Location::Interior(sp) => {
                let end = if forward { g.head(sp.edge) } else { g.tail(sp.edge) };
                (end, Some(sp))
            }
        };
        let ordered = |a: usize, b: usize| if forward { reach.reaches(a, b) } else { reach.reaches(b, a) };
        (0..self.len())
            .filter(|&q| q != p)
            .filter(|&q| match self.locations[q] {
                Location::Vertex(jx) => ordered(pivot, jx),
                Location::Interior(sq) => match same_edge {
                    Some(sp) if sp.edge == sq.edge => (sq.index > sp.index) == forward,
                    _ => {
                        let near = if forward { g.tail(sq.edge) } else { g.head(sq.edge) };
                        ordered(pivot, near)
                    }
                },
            })
            .collect()
    }
}

/// One point introduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Op {
    pub point: PointId,
    pub lo: Option<PointId>,
    pub hi: Option<PointId>,
    pub cond: Conditional,
    /// 0 for the base path, `i + 1` for tower step `i`.
    pub segment: usize,
}

#[derive(Debug, Clone)]
pub struct ConstructionPlan {
    pub points: PointTable,
    pub ops: Vec<Op>,
    pub law: Law,
    pub origin: f64,
}

impl ConstructionPlan {
    pub fn new(
        g: &TimeLikeGraph,
        tower: &Tower,
        grid: &SampleGrid,
        law: Law,
        order: BridgeOrder,
    ) -> Result<Self, FieldError> {
        let report = verify_tower(g, tower);
        if !report.passes() {
            return Err(FieldError::InvalidTower(report));
        }
        let points = PointTable::new(g, grid)?;
        let origin = law.origin(g.time(g.initial()));
        let segments = resolve_segments(g, tower).expect("verified tower resolves");
        let mut ops = Vec::with_capacity(points.len());
        let mut rng = match order {
            BridgeOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        for (s, edges) in segments.iter().enumerate() {
            let seq = segment_points(&points, edges);
            let mut known = BTreeSet::new();
            let mut todo: Vec<usize> = (0..seq.len()).collect();
            if s > 0 {
                if points.time(seq[0]) >= points.time(*seq.last().unwrap()) {
                    return Err(FieldError::DegenerateBridge { step: s - 1 });
                }
                known.insert(0);
                known.insert(seq.len() - 1);
                todo = (1..seq.len() - 1).collect();
            }
            match order {
                BridgeOrder::LeftToRight => {}
                BridgeOrder::RightToLeft => todo.reverse(),
                BridgeOrder::Shuffled(_) => todo.shuffle(rng.as_mut().unwrap()),
            }
            for i in todo {
                let lo = known.range(..i).next_back().map(|&j| seq[j]);
                let hi = known.range(i + 1..).next().map(|&j| seq[j]);
                let cond = law.conditional(origin, lo.map(|p| points.time(p)), hi.map(|p| points.time(p)), points.time(seq[i]));
                ops.push(Op { point: seq[i], lo, hi, cond, segment: s });
                known.insert(i);
            }
        }
        debug_assert_eq!(ops.len(), points.len());
        Ok(ConstructionPlan { points, ops, law, origin })
    }

    /// Runs the recursion numerically: `fresh(op)` supplies the standard
    /// normal for each op with positive variance.
    pub fn realize(&self, mut fresh: impl FnMut(usize) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; self.points.len()];
        for (k, op) in self.ops.iter().enumerate() {
            let c = op.cond;
            let mut v = c.intercept;
            if let Some(lo) = op.lo {
                v += c.w_lo * x[lo];
            }
            if let Some(hi) = op.hi {
                v += c.w_hi * x[hi];
            }
            if c.var > 0.0 {
                v += c.var.sqrt() * fresh(k);
            }
            x[op.point] = v;
        }
        x
    }
}

/// Points along a chain of edges, shared vertices listed once.
fn segment_points(points: &PointTable, edges: &[EdgeIdx]) -> Vec<PointId> {
    let mut seq = Vec::new();
    for (j, &k) in edges.iter().enumerate() {
        let pts = points.edge_points(k);
        let skip = usize::from(j > 0);
        seq.extend_from_slice(&pts[skip..]);
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tower::build_tower;

    #[test]
    fn every_point_is_introduced_once() {
        let g = fixtures::fig4();
        let grid = SampleGrid::with_mesh(&g, 0.05).unwrap();
        let tower = build_tower(&g).unwrap();
        let plan = ConstructionPlan::new(&g, &tower, &grid, Law::default(), BridgeOrder::Shuffled(7)).unwrap();
        let mut seen = vec![false; plan.points.len()];
        for op in &plan.ops {
            assert!(!seen[op.point]);
            for q in op.lo.into_iter().chain(op.hi) {
                assert!(seen[q], "neighbour introduced first");
            }
            seen[op.point] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn labels_and_lookup() {
        let g = fixtures::minimal();
        let grid = SampleGrid::with_mesh(&g, 0.5).unwrap();
        let t = PointTable::new(&g, &grid).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.label(0), "v:0");
        assert_eq!(t.label(2), "0:1");
        assert_eq!(t.point(SamplePoint { edge: 0, index: 2 }), Some(1));
        assert_eq!(t.time(2), 0.5);
    }

    #[test]
    fn future_of_a_branch_point() {
        let g = fixtures::unit_cell();
        let grid = SampleGrid::with_mesh(&g, 0.5).unwrap();
        let t = PointTable::new(&g, &grid).unwrap();
        let reach = Reach::new(&g);
        let k = g.find_edge(1, 2, 0).unwrap();
        let p = t.point(SamplePoint { edge: k, index: 1 }).unwrap();
        let fut: Vec<String> = t.related(&reach, p, true).iter().map(|&q| t.label(q)).collect();
        assert!(fut.contains(&"v:2".to_string()) && fut.contains(&"v:3".to_string()));
        assert!(fut.iter().all(|l| l.starts_with("v:") || l.starts_with(&format!("{}:", g.find_edge(2, 3, 0).unwrap()))));
        let past = t.related(&reach, p, false);
        assert_eq!(past.len(), 2 + grid.interior_count(g.find_edge(0, 1, 0).unwrap()));
    }
}

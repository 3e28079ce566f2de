//! Sample grids: per-edge time lists and point addressing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeIdx, TimeLikeGraph};

/// Matching tolerance for addressing grid points by time.
pub const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid has {got} edge lists for {want} edges")]
    EdgeCount { got: usize, want: usize },
    #[error("edge {edge}: endpoint times do not match the graph")]
    Endpoints { edge: EdgeIdx },
    #[error("edge {edge}: times are not strictly increasing")]
    NotIncreasing { edge: EdgeIdx },
    #[error("edge {edge}: time {time} lies outside the edge")]
    OutsideEdge { edge: EdgeIdx, time: f64 },
    #[error("mesh must be positive, got {0}")]
    BadMesh(f64),
}

/// For each edge, the strictly increasing sample times including both
/// endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub times: Vec<Vec<f64>>,
}

/// An edge id plus an index into that edge's grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SamplePoint {
    pub edge: EdgeIdx,
    pub index: usize,
}

impl SampleGrid {
    /// Endpoints only.
    pub fn vertices_only(g: &TimeLikeGraph) -> Self {
        let times = (0..g.edge_count())
            .map(|k| {
                let (a, b) = g.edge_times(k);
                vec![a, b]
            })
            .collect();
        SampleGrid { times }
    }

    /// Each edge split into the fewest equal pieces of length at most `h`.
    pub fn with_mesh(g: &TimeLikeGraph, h: f64) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadMesh(h));
        }
        let times = (0..g.edge_count())
            .map(|k| {
                let (a, b) = g.edge_times(k);
                let pieces = ((b - a) / h - 1e-9).ceil().max(1.0) as usize;
                (0..=pieces)
                    .map(|i| if i == pieces { b } else { a + (b - a) * i as f64 / pieces as f64 })
                    .collect()
            })
            .collect();
        Ok(SampleGrid { times })
    }

    /// Adds an interior time to one edge (no-op if already present).
    pub fn insert(&mut self, edge: EdgeIdx, t: f64) -> Result<(), GridError> {
        let list = &mut self.times[edge];
        let (a, b) = (list[0], *list.last().unwrap());
        if !(t > a && t < b) {
            return Err(GridError::OutsideEdge { edge, time: t });
        }
        if let Err(pos) = list.binary_search_by(|x| x.total_cmp(&t)) {
            if !list.iter().any(|x| (x - t).abs() <= TIME_MATCH_TOL) {
                list.insert(pos, t);
            }
        }
        Ok(())
    }

    pub fn check(&self, g: &TimeLikeGraph) -> Result<(), GridError> {
        if self.times.len() != g.edge_count() {
            return Err(GridError::EdgeCount { got: self.times.len(), want: g.edge_count() });
        }
        for (k, list) in self.times.iter().enumerate() {
            let (a, b) = g.edge_times(k);
            if list.len() < 2 || list[0] != a || *list.last().unwrap() != b {
                return Err(GridError::Endpoints { edge: k });
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GridError::NotIncreasing { edge: k });
            }
        }
        Ok(())
    }

    /// Largest gap between consecutive grid times.
    pub fn mesh(&self) -> f64 {
        self.times
            .iter()
            .flat_map(|l| l.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    pub fn interior_count(&self, edge: EdgeIdx) -> usize {
        self.times[edge].len() - 2
    }

    /// Index of the grid time on `edge` within [`TIME_MATCH_TOL`] of `t`.
    pub fn index_of(&self, edge: EdgeIdx, t: f64) -> Option<usize> {
        self.times[edge].iter().position(|x| (x - t).abs() <= TIME_MATCH_TOL)
    }
}

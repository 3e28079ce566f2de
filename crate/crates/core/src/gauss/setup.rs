//! One-call preparation of a natural field for an arbitrary (strict or
//! relaxed) graph, and textual point addresses.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::field::{build_field, GaussianField};
use super::grid::{SampleGrid, SamplePoint};
use super::law::Law;
use super::plan::{FieldError, PointId};
use crate::graph::{TimeLikeGraph, VertexId};
use crate::tower::{build_tower, Tower, TowerError};
use crate::validate::{collapse, CollapsedGraph};

/// A strict graph, its tower and grid, with aliases for the original
/// vertices that became interior points after collapsing.
#[derive(Debug, Clone)]
pub struct NaturalSetup {
    pub source: TimeLikeGraph,
    pub graph: TimeLikeGraph,
    pub collapsed: Option<CollapsedGraph>,
    pub tower: Tower,
    pub grid: SampleGrid,
    pub aliases: HashMap<VertexId, SamplePoint>,
}

impl NaturalSetup {
    /// Collapses pass-through vertices if present, builds a tower and a grid
    /// (mesh `h`, or vertices only) that contains every original vertex.
    pub fn new(g: &TimeLikeGraph, mesh: Option<f64>) -> Result<Self, FieldError> {
        let has_pass_through = (0..g.vertex_count()).any(|ix| g.in_edges(ix).len() == 1 && g.out_edges(ix).len() == 1);
        let (graph, collapsed) = if has_pass_through {
            let c = collapse(g);
            (c.graph.clone(), Some(c))
        } else {
            (g.clone(), None)
        };
        let tower = build_tower(&graph).map_err(|e| match e {
            TowerError::NotNcc { witness } => FieldError::NotNcc { witness },
            TowerError::Stalled { .. } => FieldError::InvalidTower(Default::default()),
        })?;
        Self::with_tower(g, graph, collapsed, tower, mesh)
    }

    fn with_tower(
        source: &TimeLikeGraph,
        graph: TimeLikeGraph,
        collapsed: Option<CollapsedGraph>,
        tower: Tower,
        mesh: Option<f64>,
    ) -> Result<Self, FieldError> {
        let mut grid = match mesh {
            Some(h) => SampleGrid::with_mesh(&graph, h)?,
            None => SampleGrid::vertices_only(&graph),
        };
        let mut aliases = HashMap::new();
        if let Some(c) = &collapsed {
            for (k, chain) in c.chains.iter().enumerate() {
                for v in chain {
                    grid.insert(k, v.time)?;
                }
            }
            for (k, chain) in c.chains.iter().enumerate() {
                for v in chain {
                    let index = grid.index_of(k, v.time).expect("inserted above");
                    aliases.insert(v.id, SamplePoint { edge: k, index });
                }
            }
        }
        Ok(NaturalSetup { source: source.clone(), graph, collapsed, tower, grid, aliases })
    }

    pub fn field(&self, law: Law) -> Result<GaussianField, FieldError> {
        build_field(&self.graph, &self.tower, &self.grid, law)
    }

    /// Adds an interior edge point to the grid so that it resolves; vertex
    /// addresses and edge endpoints need nothing.
    pub fn insert(&mut self, addr: &PointAddress) -> Result<(), AddressError> {
        let PointAddress::OnEdge { from, to, slot, time } = *addr else { return Ok(()) };
        let original = self.source.find_edge(from, to, slot).ok_or(AddressError::UnknownEdge { from, to, slot })?;
        let (a, b) = self.source.edge_times(original);
        if !(time >= a && time <= b) {
            return Err(AddressError::OffEdge { time });
        }
        let edge = match &self.collapsed {
            Some(c) => c.edge_of(original).ok_or(AddressError::UnknownEdge { from, to, slot })?,
            None => original,
        };
        if self.grid.index_of(edge, time).is_none() {
            self.grid.insert(edge, time).map_err(|_| AddressError::OffEdge { time })?;
        }
        Ok(())
    }

    /// Resolves an address against the original graph.
    pub fn resolve(&self, field: &GaussianField, addr: &PointAddress) -> Result<PointId, AddressError> {
        match *addr {
            PointAddress::Vertex(id) => {
                if let Some(p) = field.vertex(id) {
                    return Ok(p);
                }
                let sp = self.aliases.get(&id).ok_or(AddressError::UnknownVertex(id))?;
                Ok(field.points().point(*sp).expect("alias in grid"))
            }
            PointAddress::OnEdge { from, to, slot, time } => {
                let original = self
                    .source
                    .find_edge(from, to, slot)
                    .ok_or(AddressError::UnknownEdge { from, to, slot })?;
                let edge = match &self.collapsed {
                    Some(c) => c.edge_of(original).ok_or(AddressError::UnknownEdge { from, to, slot })?,
                    None => original,
                };
                let (a, b) = self.source.edge_times(original);
                if !(time >= a && time <= b) {
                    return Err(AddressError::OffEdge { time });
                }
                let index = self.grid.index_of(edge, time).ok_or(AddressError::OffGrid { time })?;
                Ok(field.points().point(SamplePoint { edge, index }).expect("index in range"))
            }
        }
    }
}

/// `v:<id>` or `e:<from>-<to>[:slot]@<time>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointAddress {
    Vertex(VertexId),
    OnEdge { from: VertexId, to: VertexId, slot: u8, time: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AddressError {
    #[error("cannot parse point address {0:?} (expected v:<id> or e:<from>-<to>[:slot]@<time>)")]
    Syntax(String),
    #[error("no vertex {0}")]
    UnknownVertex(VertexId),
    #[error("no edge {from}->{to} slot {slot}")]
    UnknownEdge { from: VertexId, to: VertexId, slot: u8 },
    #[error("time {time} lies outside the edge")]
    OffEdge { time: f64 },
    #[error("time {time} is not a grid point of the edge (refine the mesh)")]
    OffGrid { time: f64 },
}

impl FromStr for PointAddress {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AddressError::Syntax(s.to_string());
        if let Some(id) = s.strip_prefix("v:") {
            return id.parse().map(PointAddress::Vertex).map_err(|_| bad());
        }
        let rest = s.strip_prefix("e:").ok_or_else(bad)?;
        let (edge, time) = rest.split_once('@').ok_or_else(bad)?;
        let time: f64 = time.parse().map_err(|_| bad())?;
        let (pair, slot) = match edge.split_once(':') {
            Some((p, s)) => (p, s.parse().map_err(|_| bad())?),
            None => (edge, 0),
        };
        let (from, to) = pair.split_once('-').ok_or_else(bad)?;
        Ok(PointAddress::OnEdge {
            from: from.parse().map_err(|_| bad())?,
            to: to.parse().map_err(|_| bad())?,
            slot,
            time,
        })
    }
}

impl fmt::Display for PointAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointAddress::Vertex(id) => write!(f, "v:{id}"),
            PointAddress::OnEdge { from, to, slot, time } => write!(f, "e:{from}-{to}:{slot}@{time}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parse_addresses() {
        assert_eq!("v:7".parse::<PointAddress>().unwrap(), PointAddress::Vertex(7));
        assert_eq!(
            "e:1-2:1@0.5".parse::<PointAddress>().unwrap(),
            PointAddress::OnEdge { from: 1, to: 2, slot: 1, time: 0.5 }
        );
        assert_eq!(
            "e:1-2@0.25".parse::<PointAddress>().unwrap(),
            PointAddress::OnEdge { from: 1, to: 2, slot: 0, time: 0.25 }
        );
        for bad in ["x:1", "v:a", "e:1-2", "e:12@0.5", "e:1-2:z@0.1"] {
            assert!(bad.parse::<PointAddress>().is_err(), "{bad}");
        }
    }

    #[test]
    fn relaxed_graph_aliases_resolve() {
        let g = fixtures::fig4_without_3();
        let setup = NaturalSetup::new(&g, None).unwrap();
        let f = setup.field(Law::default()).unwrap();
        for id in [2, 4] {
            let p = setup.resolve(&f, &PointAddress::Vertex(id)).unwrap();
            assert_eq!(f.time(p), g.time_of(id).unwrap());
        }
    }

    #[test]
    fn off_grid_is_rejected() {
        let g = fixtures::unit_cell();
        let setup = NaturalSetup::new(&g, Some(0.25)).unwrap();
        let f = setup.field(Law::default()).unwrap();
        let ok = PointAddress::OnEdge { from: 1, to: 2, slot: 1, time: 0.5 };
        assert!(setup.resolve(&f, &ok).is_ok());
        let off = PointAddress::OnEdge { from: 1, to: 2, slot: 1, time: 0.3 };
        assert_eq!(setup.resolve(&f, &off), Err(AddressError::OffGrid { time: 0.3 }));
    }

    #[test]
    fn non_ncc_is_refused() {
        assert!(matches!(NaturalSetup::new(&fixtures::fig2(), None), Err(FieldError::NotNcc { .. })));
    }
}

#[cfg(test)]
mod remark_iii {
    use super::*;
    use crate::fixtures;
    use crate::gauss::identities::cell_formula_values;

    #[test]
    fn fig4_subgraph_changes_t2_t4_covariance() {
        let full = NaturalSetup::new(&fixtures::fig4(), None).unwrap();
        let sub = NaturalSetup::new(&fixtures::fig4_without_3(), None).unwrap();
        let (f2, f1) = (full.field(Law::default()).unwrap(), sub.field(Law::default()).unwrap());
        let cov = |s: &NaturalSetup, f: &GaussianField| {
            let a = s.resolve(f, &PointAddress::Vertex(2)).unwrap();
            let b = s.resolve(f, &PointAddress::Vertex(4)).unwrap();
            f.covariance(a, b)
        };
        let (on_g2, on_g1) = (cov(&full, &f2), cov(&sub, &f1));
        let formula = cell_formula_values(&fixtures::fig4_without_3(), 2, 4).unwrap();
        assert!((on_g2 - 2.0 / 11.0).abs() < 1e-12);
        assert!(formula.iter().all(|v| (v.value - on_g1).abs() < 1e-12));
        assert!((on_g2 - on_g1).abs() > 1e-6);
    }
}

//! Time-like graphs and the natural Brownian motion on them.

pub mod cells;
pub mod dubins;
pub mod fixtures;
pub mod gauss;
pub mod generate;
pub mod graph;
pub mod harness;
pub mod honeycomb;
pub mod ncc;
pub mod paths;
#[cfg(test)]
mod properties;
pub mod sampler;
pub mod tower;
pub mod validate;

pub use cells::{classify_cell, find_cells, Cell, CellFlags};
pub use graph::{Edge, EdgeIdx, GraphFile, Mode, TimeLikeGraph, Vertex, VertexId};
pub use ncc::{has_cell, is_ncc, NccVerdict};
pub use paths::{full_time_paths, TimePath};
pub use tower::{build_tower, verify_tower, ConstructionStep, Tower, TowerError, TowerReport};
pub use validate::{collapse, validate_tlg, CollapsedGraph, ValidationReport, Violation};

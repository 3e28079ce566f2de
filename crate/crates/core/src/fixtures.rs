//! Graphs from the figures plus a few small hand-checked graphs.
//!
//! The JSON sources live in `crates/core/fixtures/` and are embedded here.

use crate::graph::{Edge, Mode, TimeLikeGraph, VertexId};
use crate::tower::Tower;

pub const MINIMAL_JSON: &str = include_str!("../fixtures/minimal.json");
pub const FIG1_JSON: &str = include_str!("../fixtures/fig1.json");
pub const FIG2_JSON: &str = include_str!("../fixtures/fig2.json");
pub const FIG4_JSON: &str = include_str!("../fixtures/fig4.json");
pub const PARALLEL_JSON: &str = include_str!("../fixtures/parallel.json");
pub const SINGLE_CELL_JSON: &str = include_str!("../fixtures/single_cell.json");
pub const FIG4_TOWER_JSON: &str = include_str!("../fixtures/fig4_tower.json");

fn load(text: &str) -> TimeLikeGraph {
    TimeLikeGraph::from_json(text).expect("bundled fixture parses")
}

/// Two vertices at times 0 and 1 joined by one edge.
pub fn minimal() -> TimeLikeGraph {
    load(MINIMAL_JSON)
}

/// Vertices j/7, the NCC example of Fig. 1.
pub fn fig1() -> TimeLikeGraph {
    load(FIG1_JSON)
}

/// Vertices j/7, the non-NCC example of Fig. 2.
pub fn fig2() -> TimeLikeGraph {
    load(FIG2_JSON)
}

/// Vertices j/11, the NCC graph of Fig. 4.
pub fn fig4() -> TimeLikeGraph {
    load(FIG4_JSON)
}

/// The tower for Fig. 4 listed in the remark after the NCC theorem.
pub fn fig4_paper_tower() -> Tower {
    serde_json::from_str(FIG4_TOWER_JSON).expect("bundled tower parses")
}

/// Lead-in edge, a doubled edge, lead-out edge (times j/3).
pub fn parallel_edge() -> TimeLikeGraph {
    load(PARALLEL_JSON)
}

/// One cell with both branches running from 0 to 1; unit lead-in and
/// lead-out edges keep the endpoints at degree 1.
pub fn unit_cell() -> TimeLikeGraph {
    load(SINGLE_CELL_JSON)
}

/// A single simple cell from `tj` to `tn` made of two parallel edges, with
/// lead-in from `t0` and lead-out to `t_end`. Ids: 0 = t0, 1 = tj, 2 = tn, 3 = t_end.
pub fn single_cell(t0: f64, tj: f64, tn: f64, t_end: f64) -> TimeLikeGraph {
    TimeLikeGraph::from_pairs(
        &[(0, t0), (1, tj), (2, tn), (3, t_end)],
        &[(0, 1), (1, 2), (1, 2), (2, 3)],
        Mode::Strict,
    )
    .expect("cell fixture is structural")
}

/// `k` cells in series along `[0, 1]`, each a doubled edge; planar.
pub fn cell_chain(k: usize) -> TimeLikeGraph {
    let n = 2 * k + 2;
    let step = 1.0 / (n - 1) as f64;
    let vertices: Vec<(VertexId, f64)> = (0..n).map(|j| (j as VertexId, j as f64 * step)).collect();
    let mut edges = vec![(0, 1)];
    for c in 0..k {
        let a = (2 * c + 1) as VertexId;
        edges.push((a, a + 1));
        edges.push((a, a + 1));
        if c + 1 < k {
            edges.push((a + 1, a + 2));
        }
    }
    edges.push(((n - 2) as VertexId, (n - 1) as VertexId));
    TimeLikeGraph::from_pairs(&vertices, &edges, Mode::Strict).expect("chain is structural")
}

/// A cell whose upper branch contains a smaller cell; planar.
pub fn nested_cell() -> TimeLikeGraph {
    TimeLikeGraph::from_pairs(
        &[(0, 0.0), (1, 0.1), (2, 0.3), (3, 0.6), (4, 0.9), (5, 1.0)],
        &[(0, 1), (1, 2), (1, 4), (2, 3), (2, 3), (3, 4), (4, 5)],
        Mode::Strict,
    )
    .expect("nested cell is structural")
}

/// Two rails from 1 to 6 joined by rungs 2->3 and 4->5; planar.
pub fn ladder() -> TimeLikeGraph {
    TimeLikeGraph::from_pairs(
        &[(0, 0.0), (1, 0.1), (2, 0.2), (3, 0.4), (4, 0.5), (5, 0.7), (6, 0.9), (7, 1.0)],
        &[(0, 1), (1, 2), (1, 3), (2, 3), (2, 4), (3, 5), (4, 5), (4, 6), (5, 6), (6, 7)],
        Mode::Strict,
    )
    .expect("ladder is structural")
}

/// Fig. 4 with E36, E23, E34 deleted; vertex 3 becomes isolated and is dropped,
/// leaving a relaxed graph with pass-through vertices 2 and 4.
pub fn fig4_without_3() -> TimeLikeGraph {
    let g = fig4().without_edges(&[Edge::new(3, 6), Edge::new(2, 3), Edge::new(3, 4)]);
    let vertices = g.vertices().iter().copied().filter(|v| v.id != 3).collect();
    TimeLikeGraph::new(vertices, g.edges().to_vec(), Mode::Relaxed).expect("subgraph is structural")
}

/// Fig. 2 without E34 (relaxed): the larger graph of Remark (i).
pub fn fig2_without_34() -> TimeLikeGraph {
    fig2().without_edges(&[Edge::new(3, 4)])
}

/// Hand-certified planar fixtures.
pub fn planar() -> Vec<(&'static str, TimeLikeGraph)> {
    vec![
        ("minimal", minimal()),
        ("parallel", parallel_edge()),
        ("unit_cell", unit_cell()),
        ("chain3", cell_chain(3)),
        ("nested", nested_cell()),
        ("ladder", ladder()),
    ]
}

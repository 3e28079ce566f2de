//! Property tests spanning several modules.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dubins::{dubins_tree, embedded_measure, DiscreteMeasure};
use crate::fixtures;
use crate::gauss::{build_field, cell_covariance_formula, Law, SampleGrid, SamplePoint};
use crate::generate::{random_ncc_graph, rewire};
use crate::harness::{filtration_levels, support_check, EdgePoint};
use crate::honeycomb::{descend_dp, limit_covariance, nearest_vertex, VerticalScaling};
use crate::ncc::{is_ncc, is_ncc_by_enumeration};
use crate::paths::TimePath;
use crate::tower::{build_tower, random_tower, replay_edges, verify_tower};
use crate::TimeLikeGraph;

fn random_graph(seed: u64, steps: usize, swaps: usize) -> TimeLikeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_ncc_graph(&mut rng, steps);
    if swaps == 0 {
        g
    } else {
        rewire(&g, &mut rng, swaps)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_decider_matches_enumeration(seed in any::<u64>(), steps in 2usize..7, swaps in 0usize..5) {
        let g = random_graph(seed, steps, swaps);
        let by_cells = is_ncc_by_enumeration(&g, 1 << 16).unwrap();
        prop_assert_eq!(is_ncc(&g).is_ncc(), by_cells);
        prop_assert_eq!(build_tower(&g).is_ok(), by_cells);
    }

    #[test]
    fn reversal_preserves_ncc(seed in any::<u64>(), steps in 2usize..8, swaps in 0usize..5) {
        let g = random_graph(seed, steps, swaps);
        let r = g.reverse();
        prop_assert_eq!(is_ncc(&g).is_ncc(), is_ncc(&r).is_ncc());
        prop_assert_eq!(r.reverse().to_json(), g.to_json());
    }

    #[test]
    fn random_towers_replay_every_edge_once(seed in any::<u64>(), steps in 2usize..8) {
        let g = random_graph(seed, steps, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let t = random_tower(&g, &mut rng, 20_000).expect("NCC graph has a tower");
        prop_assert!(verify_tower(&g, &t).passes());
        let mut edges = replay_edges(&g, &t).unwrap();
        edges.sort_unstable();
        prop_assert_eq!(edges, (0..g.edge_count()).collect::<Vec<_>>());
    }

    #[test]
    fn single_cell_covariance_matches_formula(
        tj in 0.0f64..1.0, len in 0.1f64..2.0, a in 0.01f64..0.99, b in 0.01f64..0.99,
    ) {
        let tn = tj + len;
        let (tk, tm) = (tj + a * len, tj + b * len);
        let g = fixtures::single_cell(tj - 1.0, tj, tn, tn + 1.0);
        let (ka, kb) = (g.find_edge(1, 2, 0).unwrap(), g.find_edge(1, 2, 1).unwrap());
        let mut grid = SampleGrid::vertices_only(&g);
        grid.insert(ka, tk).unwrap();
        grid.insert(kb, tm).unwrap();
        let f = build_field(&g, &build_tower(&g).unwrap(), &grid, Law::PinnedTwoSided { drift: 0.0 }).unwrap();
        let p = f.points().point(SamplePoint { edge: ka, index: 1 }).unwrap();
        let q = f.points().point(SamplePoint { edge: kb, index: 1 }).unwrap();
        let want = cell_covariance_formula(tj, tk, tm, tn).unwrap();
        prop_assert!((f.covariance(p, q) - want).abs() <= 1e-12);
    }

    #[test]
    fn dubins_levels_conserve_mass_and_mean(
        atoms in prop::collection::vec((0.0f64..1.0, 0.1f64..2.0), 1..24), n in 0usize..6,
    ) {
        let mu = DiscreteMeasure::normalized(atoms).unwrap();
        let nu = embedded_measure(&dubins_tree(&mu, n), n);
        let mass: f64 = nu.atoms().iter().map(|a| a.1).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert!((nu.mean() - mu.mean()).abs() <= 1e-12);
    }

    #[test]
    fn harness_levels_conserve_mass_and_mean(tj in 0.0f64..1.0, len in 0.2f64..2.0, frac in 0.02f64..0.98, slot in 0u8..2) {
        let tn = tj + len;
        let g = fixtures::single_cell(tj - 1.0, tj, tn, tn + 1.0);
        let edge = g.find_edge(1, 2, slot).unwrap();
        let t_star = EdgePoint { edge, time: tj + frac * len };
        let sigma = TimePath::with_slots(vec![0, 1, 2, 3], vec![0, 1 - slot, 0]);
        let levels = filtration_levels(&g, &support_check(&g, &sigma, t_star).unwrap()).unwrap();
        for m in 1..=levels.depth() {
            let d = levels.distribution(&g, m).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= 1e-12);
            prop_assert!((d.mean_time() - t_star.time).abs() <= 1e-12);
        }
    }

    #[test]
    fn honeycomb_descent_conserves_mass_and_time(t in 0.05f64..1.0, y in 0.0f64..0.6) {
        let rho = 0.1;
        let start = nearest_vertex(rho, t, VerticalScaling::Statement.height(rho, y));
        let law = descend_dp(rho, start).unwrap();
        let t0 = start.time(rho);
        prop_assert!((law.total_mass() - 1.0).abs() <= 1e-12);
        for (m, mean) in law.mass_by_layer.iter().zip(&law.mean_by_layer) {
            prop_assert!((m - 1.0).abs() <= 1e-12);
            prop_assert!((mean - t0).abs() <= 1e-12);
        }
    }

    #[test]
    fn limit_covariance_is_symmetric_and_bounded(u in 0.0f64..2.0, v in 0.0f64..2.0, x in 0.001f64..2.0) {
        let c = limit_covariance(u, v, x);
        prop_assert!((c - limit_covariance(v, u, x)).abs() <= 1e-14);
        prop_assert!(c >= -1e-14 && c <= u.min(v) + 1e-14);
    }
}

//! The covariance identities of the paper as executable checks.

use serde::Serialize;
use thiserror::Error;

use super::field::{build_field, GaussianField};
use super::grid::SampleGrid;
use super::law::Law;
use super::plan::{FieldError, PointId};
use crate::cells::{find_cells, CellError};
use crate::fixtures;
use crate::graph::{TimeLikeGraph, VertexId};
use crate::paths::{full_time_paths, PathError, Reach, DEFAULT_PATH_CAP};
use crate::tower::Tower;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("cell has zero length (tn = tj)")]
    ZeroSpan,
    #[error("times must satisfy tj <= tk, tm <= tn")]
    OutsideCell,
}

/// `tj + (tk - tj)(tm - tj)/(tn - tj)`: the covariance of two points on
/// opposite branches of a simple cell from `tj` to `tn`.
pub fn cell_covariance_formula(tj: f64, tk: f64, tm: f64, tn: f64) -> Result<f64, FormulaError> {
    if tn == tj {
        return Err(FormulaError::ZeroSpan);
    }
    if !(tj <= tk && tk <= tn && tj <= tm && tm <= tn) {
        return Err(FormulaError::OutsideCell);
    }
    Ok(tj + (tk - tj) * (tm - tj) / (tn - tj))
}

/// One cell-formula evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellValue {
    pub start: VertexId,
    pub end: VertexId,
    pub value: f64,
}

/// Cell-formula values of `E[X(a) X(b)]` over every simple cell having `a`
/// and `b` as interior vertices of opposite branches.
pub fn cell_formula_values(g: &TimeLikeGraph, a: VertexId, b: VertexId) -> Result<Vec<CellValue>, CellError> {
    let t = |id| g.time_of(id).expect("vertex exists");
    let mut out = Vec::new();
    for c in find_cells(g, DEFAULT_PATH_CAP)? {
        let (ia, ib) = (c.path_a.interior(), c.path_b.interior());
        let opposite = (ia.contains(&a) && ib.contains(&b)) || (ia.contains(&b) && ib.contains(&a));
        if c.flags.simple && opposite {
            let value = cell_covariance_formula(t(c.start), t(a), t(b), t(c.end)).expect("interior points");
            out.push(CellValue { start: c.start, end: c.end, value });
        }
    }
    Ok(out)
}

/// The two cell-formula values of `cov(X(t4), X(t5))` on Fig. 2, cell from
/// `t3` first, then from `t2`.
pub fn fig2_inconsistency() -> (f64, f64) {
    let mut vals = cell_formula_values(&fixtures::fig2(), 4, 5).expect("fixture enumerates");
    vals.sort_by(|x, y| y.start.cmp(&x.start));
    assert_eq!(vals.len(), 2, "fig. 2 has two simple cells through t4 and t5");
    (vals[0].value, vals[1].value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub towers: usize,
    pub max_diff: f64,
    pub passes: bool,
}

/// Builds the field once per tower and compares all covariance matrices
/// with the first.
pub fn tower_invariance(
    g: &TimeLikeGraph,
    towers: &[Tower],
    grid: &SampleGrid,
    law: Law,
    tol: f64,
) -> Result<InvarianceReport, FieldError> {
    let fields: Vec<GaussianField> = towers.iter().map(|t| build_field(g, t, grid, law)).collect::<Result<_, _>>()?;
    let all: Vec<PointId> = (0..fields.first().map_or(0, GaussianField::len)).collect();
    let reference = fields.first().map(|f| f.covariance_matrix(&all));
    let mut max_diff = 0.0f64;
    if let Some(r) = reference {
        for f in &fields[1..] {
            let m = f.covariance_matrix(&all);
            for (ra, rb) in r.iter().zip(&m) {
                for (x, y) in ra.iter().zip(rb) {
                    max_diff = max_diff.max((x - y).abs());
                }
            }
        }
    }
    Ok(InvarianceReport { towers: towers.len(), max_diff, passes: max_diff <= tol })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("point {0} has zero variance")]
    ZeroVariance(PointId),
}

/// Largest violation of `cov(a,b) var(t) = cov(a,t) cov(t,b)` over past
/// points `a` and future points `b` of `t`, normalised by `var(t)`.
pub fn time_markov_defect(field: &GaussianField, reach: &Reach, t: PointId) -> Result<f64, MarkovError> {
    let vt = field.variance(t);
    if vt <= 0.0 {
        return Err(MarkovError::ZeroVariance(t));
    }
    let pts = field.points();
    let past = pts.related(reach, t, false);
    let future = pts.related(reach, t, true);
    let ct_future: Vec<f64> = future.iter().map(|&b| field.covariance(t, b)).collect();
    let mut worst = 0.0f64;
    for &a in &past {
        let cat = field.covariance(a, t);
        for (&b, &ctb) in future.iter().zip(&ct_future) {
            worst = worst.max((field.covariance(a, b) - cat * ctb / vt).abs());
        }
    }
    Ok(worst)
}

/// Whether the Gaussian time-Markov factorization holds at `t` within `tol`.
pub fn check_time_markov(field: &GaussianField, t: PointId, tol: f64) -> Result<bool, MarkovError> {
    let reach = Reach::new(field.points().graph());
    Ok(time_markov_defect(field, &reach, t)? <= tol)
}

/// Largest deviation between the field and the law's covariance along
/// every full time path (vertices and grid points on its edges).
pub fn path_law_deviation(field: &GaussianField) -> Result<f64, PathError> {
    let pts = field.points();
    let g = pts.graph();
    let law = field.law();
    let origin = field.plan().origin;
    let mut worst = 0.0f64;
    for path in full_time_paths(g, DEFAULT_PATH_CAP)? {
        let mut on_path: Vec<PointId> = Vec::new();
        for k in path.edges(g)? {
            on_path.extend(pts.edge_points(k));
        }
        on_path.dedup();
        for &p in &on_path {
            for &q in &on_path {
                let want = law.cov(origin, pts.time(p), pts.time(q));
                worst = worst.max((field.covariance(p, q) - want).abs());
            }
            worst = worst.max((field.mean(p) - law.mean(origin, pts.time(p))).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::grid::SamplePoint;
    use crate::tower::build_tower;
    use approx::assert_abs_diff_eq;

    #[test]
    fn formula_examples() {
        assert_abs_diff_eq!(cell_covariance_formula(0.0, 1.0 / 3.0, 0.5, 1.0).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(cell_covariance_formula(0.2, 0.9, 0.4, 0.9).unwrap(), 0.4);
        assert_eq!(cell_covariance_formula(0.0, 0.5, 0.5, 1.0).unwrap(), 0.25);
        assert_eq!(cell_covariance_formula(0.5, 0.5, 0.5, 0.5), Err(FormulaError::ZeroSpan));
    }

    #[test]
    fn fig2_values() {
        let (a, b) = fig2_inconsistency();
        assert_abs_diff_eq!(a, 11.0 / 21.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a - b, 1.0 / 42.0, epsilon = 1e-15);
    }

    #[test]
    fn fig2_with_t2_at_three_sevenths() {
        // Remark (ii): both cells now start at time 3/7 and the values agree.
        let g = fixtures::fig2().map_times(|id, t| if id == 2 { 3.0 / 7.0 } else { t });
        let vals = cell_formula_values(&g, 4, 5).unwrap();
        assert_eq!(vals.len(), 2);
        assert_abs_diff_eq!(vals[0].value, vals[1].value, epsilon = 1e-15);
        assert_abs_diff_eq!(vals[0].value, 11.0 / 21.0, epsilon = 1e-15);
    }

    #[test]
    fn simple_cells_agree_with_engine_on_ncc_graphs() {
        assert!(cell_formula_values(&fixtures::ladder(), 2, 3).unwrap().is_empty(), "rung endpoints share a path");
        for g in [fixtures::fig1(), fixtures::fig4(), fixtures::ladder()] {
            let f = build_field(&g, &build_tower(&g).unwrap(), &SampleGrid::vertices_only(&g), Law::default()).unwrap();
            for a in g.vertices() {
                for b in g.vertices() {
                    for v in cell_formula_values(&g, a.id, b.id).unwrap() {
                        let engine = f.covariance(f.vertex(a.id).unwrap(), f.vertex(b.id).unwrap());
                        assert_abs_diff_eq!(engine, v.value, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn minimal_invariance_is_zero() {
        let g = fixtures::minimal();
        let t = build_tower(&g).unwrap();
        let grid = SampleGrid::with_mesh(&g, 0.1).unwrap();
        let r = tower_invariance(&g, &[t.clone(), t], &grid, Law::default(), 1e-10).unwrap();
        assert_eq!(r.max_diff, 0.0);
        assert!(r.passes);
    }

    #[test]
    fn markov_holds_on_minimal_and_fails_when_corrupted() {
        let g = fixtures::minimal();
        let grid = SampleGrid::with_mesh(&g, 0.25).unwrap();
        let f = build_field(&g, &build_tower(&g).unwrap(), &grid, Law::default()).unwrap();
        let mid = f.points().point(SamplePoint { edge: 0, index: 2 }).unwrap();
        assert!(check_time_markov(&f, mid, 1e-12).unwrap());
        let bad = f.with_perturbed_coefficient(f.vertex(1).unwrap(), 0, 0.1);
        assert!(!check_time_markov(&bad, mid, 1e-10).unwrap());
        assert_eq!(check_time_markov(&f, f.vertex(0).unwrap(), 1e-10), Err(MarkovError::ZeroVariance(0)));
    }

    #[test]
    fn restriction_law_on_fig4() {
        let g = fixtures::fig4();
        let grid = SampleGrid::with_mesh(&g, 0.03).unwrap();
        let f = build_field(&g, &build_tower(&g).unwrap(), &grid, Law::Wiener { drift: 0.7 }).unwrap();
        assert!(path_law_deviation(&f).unwrap() < 1e-12);
    }
}

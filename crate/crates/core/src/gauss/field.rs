//! Exact linear-Gaussian representation of the natural process.

use std::io;

use super::grid::SampleGrid;
use super::law::Law;
use super::plan::{BridgeOrder, ConstructionPlan, FieldError, PointId, PointTable};
use crate::graph::TimeLikeGraph;
use crate::tower::Tower;

/// Each point is `mean + Σ_k coeffs[k] Z_k` over independent unit
/// Gaussians `Z_k`; the coefficient rows are lower-triangular in
/// construction order.
#[derive(Debug, Clone)]
pub struct GaussianField {
    plan: ConstructionPlan,
    rows: Vec<Vec<f64>>,
    mean: Vec<f64>,
    basis_segment: Vec<usize>,
}

pub fn build_field(g: &TimeLikeGraph, tower: &Tower, grid: &SampleGrid, law: Law) -> Result<GaussianField, FieldError> {
    build_field_with(g, tower, grid, law, BridgeOrder::LeftToRight)
}

pub fn build_field_with(
    g: &TimeLikeGraph,
    tower: &Tower,
    grid: &SampleGrid,
    law: Law,
    order: BridgeOrder,
) -> Result<GaussianField, FieldError> {
    Ok(GaussianField::from_plan(ConstructionPlan::new(g, tower, grid, law, order)?))
}

impl GaussianField {
    pub fn from_plan(plan: ConstructionPlan) -> Self {
        let n = plan.points.len();
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut mean = vec![0.0; n];
        let mut basis_segment = Vec::new();
        for op in &plan.ops {
            let c = op.cond;
            let mut row = vec![0.0; basis_segment.len()];
            let mut m = c.intercept;
            for (nb, w) in [(op.lo, c.w_lo), (op.hi, c.w_hi)] {
                if let Some(q) = nb.filter(|_| w != 0.0) {
                    for (r, x) in row.iter_mut().zip(&rows[q]) {
                        *r += w * x;
                    }
                    m += w * mean[q];
                }
            }
            if c.var > 0.0 {
                row.push(c.var.sqrt());
                basis_segment.push(op.segment);
            }
            rows[op.point] = row;
            mean[op.point] = m;
        }
        GaussianField { plan, rows, mean, basis_segment }
    }

    pub fn plan(&self) -> &ConstructionPlan {
        &self.plan
    }

    pub fn points(&self) -> &PointTable {
        &self.plan.points
    }

    pub fn law(&self) -> Law {
        self.plan.law
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn basis_len(&self) -> usize {
        self.basis_segment.len()
    }

    /// Tower segment (0 = base path) that introduced basis element `k`.
    pub fn basis_segment(&self, k: usize) -> usize {
        self.basis_segment[k]
    }

    pub fn coefficients(&self, p: PointId) -> &[f64] {
        &self.rows[p]
    }

    pub fn mean(&self, p: PointId) -> f64 {
        self.mean[p]
    }

    pub fn time(&self, p: PointId) -> f64 {
        self.plan.points.time(p)
    }

    pub fn label(&self, p: PointId) -> String {
        self.plan.points.label(p)
    }

    /// Point of the vertex with the given id.
    pub fn vertex(&self, id: crate::graph::VertexId) -> Option<PointId> {
        self.plan.points.graph().ix(id)
    }

    pub fn covariance(&self, p: PointId, q: PointId) -> f64 {
        self.rows[p].iter().zip(&self.rows[q]).map(|(a, b)| a * b).sum()
    }

    pub fn variance(&self, p: PointId) -> f64 {
        self.covariance(p, p)
    }

    /// `E[X(p) X(q)]`, including the mean cross-term.
    pub fn second_moment(&self, p: PointId, q: PointId) -> f64 {
        self.covariance(p, q) + self.mean[p] * self.mean[q]
    }

    pub fn covariance_matrix(&self, pts: &[PointId]) -> Vec<Vec<f64>> {
        pts.iter().map(|&p| pts.iter().map(|&q| self.covariance(p, q)).collect()).collect()
    }

    /// Copy with one coefficient shifted; used as a negative control.
    pub fn with_perturbed_coefficient(&self, p: PointId, k: usize, delta: f64) -> Self {
        let mut out = self.clone();
        let row = &mut out.rows[p];
        if row.len() <= k {
            row.resize(k + 1, 0.0);
        }
        row[k] += delta;
        out
    }

    /// Covariance matrix as CSV with a header of point labels.
    pub fn write_covariance_csv<W: io::Write>(&self, pts: &[PointId], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["point".to_string()];
        header.extend(pts.iter().map(|&p| self.label(p)));
        w.write_record(&header)?;
        for &p in pts {
            let mut rec = vec![self.label(p)];
            rec.extend(pts.iter().map(|&q| format!("{:.17e}", self.covariance(p, q))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

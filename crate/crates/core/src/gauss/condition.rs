//! Gaussian conditioning on the exact covariance.

use serde::Serialize;
use thiserror::Error;

use super::field::GaussianField;
use super::plan::PointId;

/// Relative pivot tolerance for the semidefinite factorization.
pub const PIVOT_TOL: f64 = 1e-12;

/// `E[X(target) | X(c)] = intercept + Σ weights[i] X(c_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conditioning {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub residual: f64,
    /// Conditioners with zero variance; they carry weight 0.
    pub deterministic: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("conditioning set is singular; null direction {null_direction:?}")]
    Singular { null_direction: Vec<f64> },
}

pub fn conditional_coeffs(
    field: &GaussianField,
    target: PointId,
    conditioners: &[PointId],
) -> Result<Conditioning, ConditionError> {
    let m = conditioners.len();
    let diag: Vec<f64> = conditioners.iter().map(|&c| field.variance(c)).collect();
    let scale = diag.iter().copied().fold(1.0, f64::max);
    let tol = PIVOT_TOL * scale;
    let (live, deterministic): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| diag[i] > tol);
    let a: Vec<Vec<f64>> = live
        .iter()
        .map(|&i| live.iter().map(|&j| field.covariance(conditioners[i], conditioners[j])).collect())
        .collect();
    let b: Vec<f64> = live.iter().map(|&i| field.covariance(conditioners[i], target)).collect();
    let w_live = match PivotedCholesky::factor(&a, tol) {
        Ok(f) => f.solve(&b),
        Err(null) => {
            let mut null_direction = vec![0.0; m];
            for (k, &i) in live.iter().enumerate() {
                null_direction[i] = null[k];
            }
            return Err(ConditionError::Singular { null_direction });
        }
    };
    let mut weights = vec![0.0; m];
    for (k, &i) in live.iter().enumerate() {
        weights[i] = w_live[k];
    }
    let explained: f64 = w_live.iter().zip(&b).map(|(w, c)| w * c).sum();
    let residual = (field.variance(target) - explained).max(0.0);
    let intercept = field.mean(target)
        - weights.iter().zip(conditioners).map(|(w, &c)| w * field.mean(c)).sum::<f64>();
    Ok(Conditioning { weights, intercept, residual, deterministic })
}

/// `P A Pᵀ = L Lᵀ` with diagonal pivoting.
struct PivotedCholesky {
    l: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl PivotedCholesky {
    /// On a pivot below `tol`, returns a vector `v` with `A v ≈ 0`.
    fn factor(a: &[Vec<f64>], tol: f64) -> Result<Self, Vec<f64>> {
        let n = a.len();
        let mut work: Vec<Vec<f64>> = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            let p = (j..n).max_by(|&x, &y| work[x][x].total_cmp(&work[y][y])).unwrap();
            if work[p][p] <= tol {
                return Err(Self::null_direction(a, &perm[..j], perm[p]));
            }
            work.swap(j, p);
            for row in work.iter_mut() {
                row.swap(j, p);
            }
            l.swap(j, p);
            perm.swap(j, p);
            let d = work[j][j].sqrt();
            l[j][j] = d;
            for i in j + 1..n {
                l[i][j] = work[i][j] / d;
            }
            for i in j + 1..n {
                for k in j + 1..=i {
                    let v = work[i][k] - l[i][j] * l[k][j];
                    work[i][k] = v;
                    work[k][i] = v;
                }
            }
        }
        Ok(PivotedCholesky { l, perm })
    }

    /// Solves `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let pb: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[i][k] * y[k]).sum();
            y[i] = (pb[i] - s) / self.l[i][i];
        }
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[k][i] * z[k]).sum();
            z[i] = (y[i] - s) / self.l[i][i];
        }
        let mut x = vec![0.0; n];
        for (i, &pi) in self.perm.iter().enumerate() {
            x[pi] = z[i];
        }
        x
    }

    /// Column `r` expressed through the accepted pivots: `v_r = 1`,
    /// `v_P = -A_PP⁻¹ A_Pr`.
    fn null_direction(a: &[Vec<f64>], pivots: &[usize], r: usize) -> Vec<f64> {
        let mut v = vec![0.0; a.len()];
        v[r] = 1.0;
        if !pivots.is_empty() {
            let sub: Vec<Vec<f64>> = pivots.iter().map(|&i| pivots.iter().map(|&j| a[i][j]).collect()).collect();
            let rhs: Vec<f64> = pivots.iter().map(|&i| a[i][r]).collect();
            let f = PivotedCholesky::factor(&sub, 0.0).expect("accepted pivots are positive definite");
            for (k, c) in f.solve(&rhs).into_iter().enumerate() {
                v[pivots[k]] = -c;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }
}

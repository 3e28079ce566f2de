//! Monte Carlo realization of the natural process, driven by the same
//! construction plan as the exact engine.

use std::io;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gauss::{BridgeOrder, ConstructionPlan, FieldError, Law, PointId, SampleGrid};
use crate::graph::TimeLikeGraph;
use crate::tower::Tower;

/// Batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

/// Seed plus stream; one stream per sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("interior times must increase strictly inside ({t0}, {t1})")]
    NonMonotone { t0: f64, t1: f64 },
    #[error("need at least {min} samples, got {n}")]
    TooFew { n: usize, min: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Brownian bridge from `(t0, x0)` to `(t1, x1)` at `times`, by sequential
/// conditioning; returns the endpoint values around the interior ones.
pub fn sample_bridge<R: Rng + ?Sized>(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, SampleError> {
    let inside = times.iter().all(|&t| t > t0 && t < t1);
    if !(t0 < t1 && inside && times.windows(2).all(|w| w[0] < w[1])) {
        return Err(SampleError::NonMonotone { t0, t1 });
    }
    let mut out = Vec::with_capacity(times.len() + 2);
    out.push(x0);
    let (mut s, mut xs) = (t0, x0);
    for &r in times {
        let a = (t1 - r) / (t1 - s);
        let var = (r - s) * (t1 - r) / (t1 - s);
        let z: f64 = rng.sample(StandardNormal);
        xs = a * xs + (1.0 - a) * x1 + var.sqrt() * z;
        s = r;
        out.push(xs);
    }
    out.push(x1);
    Ok(out)
}

/// One draw at every sample point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath {
    pub values: Vec<f64>,
    pub rng: RngSpec,
    pub law: Law,
    pub tower: String,
}

/// A prepared natural-process sampler.
#[derive(Debug, Clone)]
pub struct Sampler {
    plan: ConstructionPlan,
    tower_hash: String,
}

impl Sampler {
    pub fn new(g: &TimeLikeGraph, tower: &Tower, grid: &SampleGrid, law: Law) -> Result<Self, FieldError> {
        let plan = ConstructionPlan::new(g, tower, grid, law, BridgeOrder::LeftToRight)?;
        Ok(Sampler { plan, tower_hash: tower.hash() })
    }

    pub fn plan(&self) -> &ConstructionPlan {
        &self.plan
    }

    pub fn tower_hash(&self) -> &str {
        &self.tower_hash
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.plan.realize(|_| rng.sample(StandardNormal))
    }

    pub fn sample(&self, spec: RngSpec) -> SamplePath {
        SamplePath {
            values: self.draw(&mut spec.rng()),
            rng: spec,
            law: self.plan.law,
            tower: self.tower_hash.clone(),
        }
    }

    /// Sample moments of the given points over `n` paths (streams `0..n`),
    /// split into [`BATCHES`] consecutive batches.
    fn batch_moments(&self, pts: &[PointId], n: usize, seed: u64) -> Result<Vec<Moments>, SampleError> {
        let min = 2 * BATCHES;
        if n < min {
            return Err(SampleError::TooFew { n, min });
        }
        Ok((0..BATCHES)
            .into_par_iter()
            .map(|b| {
                let (lo, hi) = (b * n / BATCHES, (b + 1) * n / BATCHES);
                let mut m = Moments::new(pts.len());
                for i in lo..hi {
                    let x = self.draw(&mut RngSpec::new(seed, i as u64).rng());
                    let v: Vec<f64> = pts.iter().map(|&p| x[p]).collect();
                    m.add(&v);
                }
                m
            })
            .collect())
    }

    pub fn mc_covariance(&self, p: PointId, q: PointId, n: usize, seed: u64) -> Result<McEstimate, SampleError> {
        let (est, se) = self.mc_covariance_matrix(&[p, q], n, seed)?;
        Ok(McEstimate { estimate: est[0][1], stderr: se[0][1], n })
    }

    /// Covariance estimates and batch-means standard errors for all pairs.
    pub fn mc_covariance_matrix(
        &self,
        pts: &[PointId],
        n: usize,
        seed: u64,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), SampleError> {
        let batches = self.batch_moments(pts, n, seed)?;
        let mut total = Moments::new(pts.len());
        for b in &batches {
            total.merge(b);
        }
        let k = pts.len();
        let mut est = vec![vec![0.0; k]; k];
        let mut se = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                est[i][j] = total.cov(i, j);
                let per: Vec<f64> = batches.iter().map(|b| b.cov(i, j)).collect();
                se[i][j] = batch_stderr(&per);
            }
        }
        Ok((est, se))
    }

    /// Path as CSV rows `(label, time, value)`.
    pub fn write_path_csv<W: io::Write>(&self, path: &SamplePath, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point", "time", "value"])?;
        for (p, v) in path.values.iter().enumerate() {
            let pts = &self.plan.points;
            w.write_record([pts.label(p), format!("{:.17e}", pts.time(p)), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    /// Whether `target` lies within `k` standard errors.
    pub fn agrees(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.stderr
    }
}

/// Running sums for means and cross products.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    cross: Vec<Vec<f64>>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Moments { n: 0, sum: vec![0.0; k], cross: vec![vec![0.0; k]; k] }
    }

    fn add(&mut self, v: &[f64]) {
        self.n += 1;
        for i in 0..v.len() {
            self.sum[i] += v[i];
            for j in 0..v.len() {
                self.cross[i][j] += v[i] * v[j];
            }
        }
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            for j in 0..self.sum.len() {
                self.cross[i][j] += o.cross[i][j];
            }
        }
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        let n = self.n as f64;
        self.cross[i][j] / n - (self.sum[i] / n) * (self.sum[j] / n)
    }
}

fn batch_stderr(per: &[f64]) -> f64 {
    let b = per.len() as f64;
    let mean = per.iter().sum::<f64>() / b;
    let var = per.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Kolmogorov-Smirnov distance between a sample and `N(mean, var)`.
pub fn ks_normal(samples: &[f64], mean: f64, var: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let sd = var.sqrt();
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 0.5 * (1.0 + libm::erf((x - mean) / (sd * std::f64::consts::SQRT_2)));
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gauss::{build_field, SamplePoint};
    use crate::tower::build_tower;

    #[test]
    fn bridge_endpoints_only() {
        let mut rng = RngSpec::new(1, 0).rng();
        assert_eq!(sample_bridge(0.0, 1.5, 1.0, -2.0, &[], &mut rng).unwrap(), vec![1.5, -2.0]);
        assert!(sample_bridge(0.0, 0.0, 1.0, 0.0, &[0.5, 0.4], &mut rng).is_err());
        assert!(sample_bridge(0.0, 0.0, 1.0, 0.0, &[1.0], &mut rng).is_err());
    }

    #[test]
    fn bridge_midpoint_moments() {
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| sample_bridge(0.0, 0.0, 1.0, 0.0, &[0.5], &mut RngSpec::new(3, i).rng()).unwrap()[1])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = (0.25f64 / n as f64).sqrt();
        let se_var = 0.25 * (2.0 / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "{mean}");
        assert!((var - 0.25).abs() < 4.0 * se_var, "{var}");
    }

    #[test]
    fn identical_specs_give_identical_paths() {
        let g = fixtures::fig4();
        let t = build_tower(&g).unwrap();
        let grid = SampleGrid::with_mesh(&g, 0.05).unwrap();
        let s = Sampler::new(&g, &t, &grid, Law::default()).unwrap();
        let a = s.sample(RngSpec::new(9, 4));
        let b = s.sample(RngSpec::new(9, 4));
        assert_eq!(a, b);
        assert_ne!(a.values, s.sample(RngSpec::new(9, 5)).values);
    }

    #[test]
    fn too_few_samples() {
        let g = fixtures::minimal();
        let s = Sampler::new(&g, &build_tower(&g).unwrap(), &SampleGrid::vertices_only(&g), Law::default()).unwrap();
        assert_eq!(s.mc_covariance(1, 1, 10, 0), Err(SampleError::TooFew { n: 10, min: 40 }));
    }

    #[test]
    fn base_point_variance() {
        let g = fixtures::minimal();
        let grid = SampleGrid::with_mesh(&g, 0.25).unwrap();
        let s = Sampler::new(&g, &build_tower(&g).unwrap(), &grid, Law::default()).unwrap();
        let p = s.plan().points.point(SamplePoint { edge: 0, index: 3 }).unwrap();
        let est = s.mc_covariance(p, p, 40_000, 11).unwrap();
        assert!(est.agrees(0.75, 4.0), "{est:?}");
    }

    #[test]
    fn opposite_branch_cell_covariance() {
        // Cell (0, 1/3, 1/2, 1) under the pinned law.
        let g = fixtures::unit_cell();
        let mut grid = SampleGrid::vertices_only(&g);
        let (ka, kb) = (g.find_edge(1, 2, 0).unwrap(), g.find_edge(1, 2, 1).unwrap());
        grid.insert(ka, 1.0 / 3.0).unwrap();
        grid.insert(kb, 0.5).unwrap();
        let law = Law::PinnedTwoSided { drift: 0.0 };
        let t = build_tower(&g).unwrap();
        let s = Sampler::new(&g, &t, &grid, law).unwrap();
        let f = build_field(&g, &t, &grid, law).unwrap();
        let a = f.points().point(SamplePoint { edge: ka, index: 1 }).unwrap();
        let b = f.points().point(SamplePoint { edge: kb, index: 1 }).unwrap();
        assert!((f.covariance(a, b) - 1.0 / 6.0).abs() < 1e-12);
        let est = s.mc_covariance(a, b, 60_000, 5).unwrap();
        assert!(est.agrees(1.0 / 6.0, 4.0), "{est:?}");
    }

    #[test]
    fn ks_accepts_normal_increments() {
        let g = fixtures::minimal();
        let s = Sampler::new(&g, &build_tower(&g).unwrap(), &SampleGrid::vertices_only(&g), Law::default()).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|i| s.sample(RngSpec::new(2, i)).values[1]).collect();
        assert!(ks_normal(&xs, 0.0, 1.0) < ks_critical(xs.len(), 0.001));
        assert!(ks_normal(&xs, 0.5, 1.0) > ks_critical(xs.len(), 0.001));
    }

    #[test]
    fn path_csv() {
        let g = fixtures::minimal();
        let s = Sampler::new(&g, &build_tower(&g).unwrap(), &SampleGrid::vertices_only(&g), Law::default()).unwrap();
        let mut buf = Vec::new();
        s.write_path_csv(&s.sample(RngSpec::new(0, 0)), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("v:0,"));
    }
}

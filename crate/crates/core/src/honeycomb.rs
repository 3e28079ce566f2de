//! Natural Brownian motion on the hexagonal lattice: lattice windows, the
//! layered descent walk, the step chain and the scaling-limit covariance.
//!
//! Coordinates: a lattice point `(layer j, q)` sits at time `q·ρ/4` and
//! height `j·ρ1` with `ρ1 = ρ√3/4`. Even layers carry `q ≡ 0, 4 (mod 6)`,
//! odd layers `q ≡ 1, 3 (mod 6)`. The anchor hexagon has vertices
//! `(0,0) (1,±1) (3,±1) (4,0)`, horizontal sides on layers ±1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::gauss::{AddressError, FieldError, Law, NaturalSetup, PointAddress};
use crate::graph::{Mode, TimeLikeGraph, VertexId};
use crate::sampler::{McEstimate, SampleError, Sampler};

/// Chain states in units of `ρ/4`.
pub const STATES: [i64; 4] = [-3, -1, 1, 3];

/// Tie tolerance for nearest-vertex distances, relative to `ρ²`.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HoneycombError {
    #[error("rho must be positive and finite, got {0}")]
    BadRho(f64),
    #[error("invalid window: {0}")]
    BadSpec(String),
    #[error("window contains no edges")]
    EmptyWindow,
    #[error("start point {0:?} lies below layer 0")]
    BelowAxis(LatticePoint),
    #[error("point ({t}, {y}) outside the window extent")]
    OutOfExtent { t: f64, y: f64 },
    #[error("arguments must be nonnegative and finite")]
    BadArgument,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Address(#[from] AddressError),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

pub fn rho1(rho: f64) -> f64 {
    rho * 3f64.sqrt() / 4.0
}

fn check_rho(rho: f64) -> Result<(), HoneycombError> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(HoneycombError::BadRho(rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LatticePoint {
    pub layer: i64,
    pub q: i64,
}

impl LatticePoint {
    pub fn new(layer: i64, q: i64) -> Option<Self> {
        Self::is_vertex(layer, q).then_some(LatticePoint { layer, q })
    }

    pub fn is_vertex(layer: i64, q: i64) -> bool {
        let r = q.rem_euclid(6);
        if layer.rem_euclid(2) == 0 {
            r == 0 || r == 4
        } else {
            r == 1 || r == 3
        }
    }

    pub fn time(&self, rho: f64) -> f64 {
        self.q as f64 * rho / 4.0
    }

    pub fn height(&self, rho: f64) -> f64 {
        self.layer as f64 * rho1(rho)
    }

    /// Horizontal step of the slanted edges (same for up and down).
    fn slant(&self) -> i64 {
        match (self.layer.rem_euclid(2), self.q.rem_euclid(6)) {
            (0, 0) | (1, 3) => 1,
            _ => -1,
        }
    }

    pub fn horizontal(&self) -> LatticePoint {
        let dq = match (self.layer.rem_euclid(2), self.q.rem_euclid(6)) {
            (0, 0) | (1, 3) => -2,
            _ => 2,
        };
        LatticePoint { layer: self.layer, q: self.q + dq }
    }

    pub fn up(&self) -> LatticePoint {
        LatticePoint { layer: self.layer + 1, q: self.q + self.slant() }
    }

    pub fn down(&self) -> LatticePoint {
        LatticePoint { layer: self.layer - 1, q: self.q + self.slant() }
    }

    pub fn neighbours(&self) -> [LatticePoint; 3] {
        [self.horizontal(), self.up(), self.down()]
    }

    /// The two lower neighbours `N(t̄)` of the descent walk, earlier first:
    /// the own down-neighbour and the horizontal partner's.
    pub fn lower_pair(&self) -> (LatticePoint, LatticePoint) {
        let a = self.down();
        let b = self.horizontal().down();
        if a.q < b.q {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// Vertex nearest to `(t, y)`; ties go to smaller time, then smaller height.
pub fn nearest_vertex(rho: f64, t: f64, y: f64) -> LatticePoint {
    let r1 = rho1(rho);
    let j0 = (y / r1).round() as i64;
    let q0 = (4.0 * t / rho).round() as i64;
    let mut best: Option<(f64, LatticePoint)> = None;
    for layer in j0 - 1..=j0 + 1 {
        for q in q0 - 4..=q0 + 4 {
            let Some(p) = LatticePoint::new(layer, q) else { continue };
            let d = (p.time(rho) - t).powi(2) + (p.height(rho) - y).powi(2);
            best = match best {
                None => Some((d, p)),
                Some((bd, bp)) => {
                    let tol = TIE_TOL * rho * rho;
                    let better = d < bd - tol || ((d - bd).abs() <= tol && (p.q, p.layer) < (bp.q, bp.layer));
                    if better {
                        Some((d, p))
                    } else {
                        Some((bd, bp))
                    }
                }
            };
        }
    }
    best.expect("a 3x9 block always contains lattice vertices").1
}

/// Rectangular lattice window: times in `[t_min, t_max]`, layers `-1..=j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HexWindowSpec {
    pub rho: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub j_max: i64,
}

impl HexWindowSpec {
    fn check(&self) -> Result<(), HoneycombError> {
        check_rho(self.rho)?;
        if !(self.t_min < self.t_max) || self.j_max < 0 {
            return Err(HoneycombError::BadSpec(format!(
                "need t_min < t_max and j_max >= 0, got [{}, {}], j_max {}",
                self.t_min, self.t_max, self.j_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, t: f64, y: f64) -> bool {
        let r1 = rho1(self.rho);
        t >= self.t_min && t <= self.t_max && y >= -r1 && y <= self.j_max as f64 * r1
    }

    /// Nearest lattice vertex to a point inside the extent.
    pub fn nearest_vertex(&self, t: f64, y: f64) -> Result<LatticePoint, HoneycombError> {
        if !self.contains(t, y) {
            return Err(HoneycombError::OutOfExtent { t, y });
        }
        Ok(nearest_vertex(self.rho, t, y))
    }
}

/// A finite lattice window as a relaxed time-like graph. Vertex ids index
/// `points`; `None` marks auxiliary source/sink splitters.
#[derive(Debug, Clone)]
pub struct HexWindow {
    pub rho: f64,
    pub graph: TimeLikeGraph,
    pub points: Vec<Option<LatticePoint>>,
    ids: HashMap<LatticePoint, VertexId>,
}

#[derive(Serialize)]
struct PointRow {
    id: VertexId,
    layer: Option<i64>,
    q: Option<i64>,
    time: f64,
    height: Option<f64>,
}

impl HexWindow {
    pub fn id_of(&self, p: LatticePoint) -> Option<VertexId> {
        self.ids.get(&p).copied()
    }

    pub fn lattice_vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn coordinates(&self, id: VertexId) -> Option<(f64, f64)> {
        let p = self.points.get(id as usize)?.as_ref()?;
        Some((p.time(self.rho), p.height(self.rho)))
    }

    /// Graph JSON plus a coordinate table.
    pub fn to_json(&self) -> String {
        let graph: serde_json::Value = serde_json::from_str(&self.graph.to_json()).expect("graph json");
        let rows: Vec<PointRow> = self
            .points
            .iter()
            .enumerate()
            .map(|(id, p)| PointRow {
                id: id as VertexId,
                layer: p.map(|p| p.layer),
                q: p.map(|p| p.q),
                time: self.graph.time_of(id as VertexId).expect("vertex exists"),
                height: p.map(|p| p.height(self.rho)),
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "rho": self.rho, "graph": graph, "points": rows }))
            .expect("window json")
    }

    pub fn write_json<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(self.to_json().as_bytes())
    }
}

/// Builds the window graph on `set`. Edges join lattice neighbours in
/// the set, directed forward in time; isolated points are dropped.
/// Several sources (sinks) are fed (drained) by a chain of splitters so
/// that the graph has a single degree-1 endpoint at each end.
fn build_window(rho: f64, set: BTreeSet<LatticePoint>) -> Result<HexWindow, HoneycombError> {
    let mut edges: Vec<(LatticePoint, LatticePoint)> = Vec::new();
    for p in &set {
        for n in p.neighbours() {
            if n.q > p.q && set.contains(&n) {
                edges.push((*p, n));
            }
        }
    }
    if edges.is_empty() {
        return Err(HoneycombError::EmptyWindow);
    }
    let mut used: BTreeMap<(i64, i64), LatticePoint> = BTreeMap::new();
    for &(a, b) in &edges {
        used.insert((a.q, a.layer), a);
        used.insert((b.q, b.layer), b);
    }
    let points: Vec<LatticePoint> = used.into_values().collect();
    let ids: HashMap<LatticePoint, VertexId> = points.iter().enumerate().map(|(i, p)| (*p, i as VertexId)).collect();
    let mut vertices: Vec<(VertexId, f64)> = points.iter().map(|p| (ids[p], p.time(rho))).collect();
    let mut pairs: Vec<(VertexId, VertexId)> = edges.iter().map(|(a, b)| (ids[a], ids[b])).collect();
    let mut all: Vec<Option<LatticePoint>> = points.iter().copied().map(Some).collect();

    let mut indeg = vec![0usize; points.len()];
    let mut outdeg = vec![0usize; points.len()];
    for &(a, b) in &pairs {
        outdeg[a as usize] += 1;
        indeg[b as usize] += 1;
    }
    let by_height = |ends: Vec<usize>| {
        let mut v = ends;
        v.sort_by_key(|&i| (points[i].layer, points[i].q));
        v
    };
    let sources = by_height((0..points.len()).filter(|&i| indeg[i] == 0).collect());
    let sinks = by_height((0..points.len()).filter(|&i| outdeg[i] == 0).collect());
    let step = rho / 4.0;

    let needs_feed = sources.len() > 1 || outdeg[sources[0]] > 1;
    if needs_feed {
        let t0 = sources.iter().map(|&i| points[i].time(rho)).fold(f64::INFINITY, f64::min);
        let k = sources.len();
        // S_0 -> S_1 -> ... -> S_{k-1}; S_i feeds source i-1 (i >= 1), the last also feeds source k-1.
        let base = vertices.len() as VertexId;
        for i in 0..k {
            vertices.push((base + i as VertexId, t0 - (k - i) as f64 * step));
            all.push(None);
        }
        for i in 0..k {
            let s = base + i as VertexId;
            if i + 1 < k {
                pairs.push((s, s + 1));
            }
            if i >= 1 {
                pairs.push((s, sources[i - 1] as VertexId));
            }
        }
        pairs.push((base + k as VertexId - 1, sources[k - 1] as VertexId));
    }
    let needs_drain = sinks.len() > 1 || indeg[sinks[0]] > 1;
    if needs_drain {
        let t1 = sinks.iter().map(|&i| points[i].time(rho)).fold(f64::NEG_INFINITY, f64::max);
        let k = sinks.len();
        // T_{k-1} -> ... -> T_0; T_i drains sink i-1 (i >= 1), the last also drains sink k-1.
        let base = vertices.len() as VertexId;
        for i in 0..k {
            vertices.push((base + i as VertexId, t1 + (k - i) as f64 * step));
            all.push(None);
        }
        for i in 0..k {
            let s = base + i as VertexId;
            if i + 1 < k {
                pairs.push((s + 1, s));
            }
            if i >= 1 {
                pairs.push((sinks[i - 1] as VertexId, s));
            }
        }
        pairs.push((sinks[k - 1] as VertexId, base + k as VertexId - 1));
    }
    let graph = TimeLikeGraph::from_pairs(&vertices, &pairs, Mode::Relaxed)
        .map_err(|e| HoneycombError::BadSpec(format!("{e:?}")))?;
    Ok(HexWindow { rho, graph, points: all, ids })
}

/// All lattice vertices of the extent on layers `-1..=j_max`.
pub fn hex_window(spec: &HexWindowSpec) -> Result<HexWindow, HoneycombError> {
    spec.check()?;
    let lo = (4.0 * spec.t_min / spec.rho).ceil() as i64;
    let hi = (4.0 * spec.t_max / spec.rho).floor() as i64;
    let set: BTreeSet<LatticePoint> = (-1..=spec.j_max)
        .flat_map(|layer| (lo..=hi).filter_map(move |q| LatticePoint::new(layer, q)))
        .collect();
    build_window(spec.rho, set)
}

/// The proof's window `G_*` for a start vertex: the region bounded by the
/// backward path `Γ1`, the forward path `Γ2` and the axis path `Γ3`, with
/// layers 0 and -1 extended over `cover` (times).
pub fn descent_window(rho: f64, start: LatticePoint, cover: (f64, f64)) -> Result<HexWindow, HoneycombError> {
    check_rho(rho)?;
    if start.layer < 0 {
        return Err(HoneycombError::BelowAxis(start));
    }
    let mut left: BTreeMap<i64, i64> = BTreeMap::new();
    let mut right: BTreeMap<i64, i64> = BTreeMap::new();
    let mut p = start;
    left.insert(p.layer, p.q);
    while p.layer > 0 {
        let h = p.horizontal();
        p = if h.q < p.q { h } else { p.down() };
        let e = left.entry(p.layer).or_insert(p.q);
        *e = (*e).min(p.q);
    }
    let y1 = p.q;
    let mut p = start;
    right.insert(p.layer, p.q);
    while p.layer > 0 {
        let h = p.horizontal();
        p = if h.q > p.q { h } else { p.down() };
        let e = right.entry(p.layer).or_insert(p.q);
        *e = (*e).max(p.q);
    }
    let y2 = p.q;
    let lo = y1.min(0).min((4.0 * cover.0 / rho).floor() as i64) - 1;
    let hi = y2.max(0).max((4.0 * cover.1 / rho).ceil() as i64) + 1;
    let a = 6 * lo.div_euclid(6);
    let b = 6 * (hi - 4).div_euclid(6) + 10;
    let mut set = BTreeSet::new();
    for layer in [-1, 0] {
        for q in a..=b {
            if let Some(p) = LatticePoint::new(layer, q) {
                set.insert(p);
            }
        }
    }
    for layer in 1..=start.layer {
        for q in left[&layer]..=right[&layer] {
            if let Some(p) = LatticePoint::new(layer, q) {
                set.insert(p);
            }
        }
    }
    build_window(rho, set)
}

/// The step chain of the descent walk, exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub states: [i64; 4],
    pub matrix: [[Rational64; 4]; 4],
}

impl ChainSpec {
    pub fn paper() -> Self {
        let r = |n, d| Rational64::new(n, d);
        let neg = [r(1, 4), r(0, 1), r(3, 4), r(0, 1)];
        let pos = [r(0, 1), r(3, 4), r(0, 1), r(1, 4)];
        ChainSpec { states: STATES, matrix: [neg, neg, pos, pos] }
    }

    /// Derives the chain from lattice geometry: after a step of offset `d`
    /// the walk sits on a vertex whose lower pair and ruin probabilities
    /// give the next offset.
    pub fn from_lattice() -> Self {
        let mut matrix = [[Rational64::zero(); 4]; 4];
        let starts = [LatticePoint { layer: 1, q: 1 }, LatticePoint { layer: 1, q: 3 }];
        let mut filled = [false; 4];
        for s in starts {
            for (first, _) in descent_steps(s) {
                let arrived = LatticePoint { layer: s.layer - 1, q: s.q + first };
                let i = STATES.iter().position(|&x| x == first).expect("offset is a state");
                for (next, prob) in descent_steps(arrived) {
                    let j = STATES.iter().position(|&x| x == next).expect("offset is a state");
                    matrix[i][j] = prob;
                }
                filled[i] = true;
            }
        }
        assert!(filled.iter().all(|&f| f), "every state reachable from layer 1");
        ChainSpec { states: STATES, matrix }
    }

    pub fn rows_stochastic(&self) -> bool {
        self.matrix.iter().all(|row| row.iter().sum::<Rational64>() == Rational64::one())
    }

    /// Solves `πP = π`, `Σπ = 1` by exact Gaussian elimination.
    pub fn stationary(&self) -> [Rational64; 4] {
        let mut a = [[Rational64::zero(); 5]; 4];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] = self.matrix[j][i] - if i == j { Rational64::one() } else { Rational64::zero() };
            }
        }
        for j in 0..4 {
            a[3][j] = Rational64::one();
        }
        a[3][4] = Rational64::one();
        for col in 0..4 {
            let piv = (col..4).find(|&r| !a[r][col].is_zero()).expect("chain is irreducible");
            a.swap(col, piv);
            let p = a[col][col];
            for x in a[col].iter_mut() {
                *x /= p;
            }
            for r in 0..4 {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col];
                    let row = a[col];
                    for (x, y) in a[r].iter_mut().zip(row) {
                        *x -= f * y;
                    }
                }
            }
        }
        [a[0][4], a[1][4], a[2][4], a[3][4]]
    }

    /// Power iteration from the uniform vector, in f64.
    pub fn stationary_power(&self, iters: usize) -> [f64; 4] {
        let m: Vec<Vec<f64>> =
            self.matrix.iter().map(|r| r.iter().map(|x| *x.numer() as f64 / *x.denom() as f64).collect()).collect();
        // The chain has period 2 on {±1} x {±3} blocks, so iterate the lazy chain (I + P)/2.
        let mut pi = [0.25; 4];
        for _ in 0..iters {
            let mut next = [0.0; 4];
            for i in 0..4 {
                for j in 0..4 {
                    next[j] += pi[i] * 0.5 * (m[i][j] + if i == j { 1.0 } else { 0.0 });
                }
            }
            pi = next;
        }
        pi
    }

    /// `Σ π_i s_i^2` in units of `ρ²`.
    pub fn second_moment(&self) -> Rational64 {
        let pi = self.stationary();
        pi.iter().zip(self.states).map(|(p, s)| *p * Rational64::new(s * s, 16)).sum()
    }

    /// `Σ π_i s_i` in units of `ρ`.
    pub fn mean(&self) -> Rational64 {
        let pi = self.stationary();
        pi.iter().zip(self.states).map(|(p, s)| *p * Rational64::new(s, 4)).sum()
    }
}

pub fn chain_stationary() -> [Rational64; 4] {
    ChainSpec::paper().stationary()
}

/// Stationary `E C_k²` for cell diameter `rho`.
pub fn step_variance(rho: f64) -> f64 {
    let m = ChainSpec::paper().second_moment();
    *m.numer() as f64 / *m.denom() as f64 * rho * rho
}

/// Offsets (units of `ρ/4`) and exact probabilities of one descent step.
fn descent_steps(p: LatticePoint) -> [(i64, Rational64); 2] {
    let (a, b) = p.lower_pair();
    let (da, db) = (a.q - p.q, b.q - p.q);
    let hi = Rational64::new(-da, db - da);
    [(da, Rational64::one() - hi), (db, hi)]
}

/// Layer-0 absorption law of the descent walk. Mass reaching time `<= 0`
/// is held in a sink whose value is 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentLaw {
    pub rho: f64,
    pub start: LatticePoint,
    /// `(q, probability)` on layer 0 with `q > 0`.
    pub atoms: Vec<(i64, f64)>,
    pub sink_mass: f64,
    /// `Σ p·q` of the sink, in units of `ρ/4`.
    pub sink_moment: f64,
    /// Total mass (live plus sink) after each layer, from the start layer down.
    pub mass_by_layer: Vec<f64>,
    /// Mean time (live plus sink) after each layer.
    pub mean_by_layer: Vec<f64>,
}

impl DescentLaw {
    pub fn total_mass(&self) -> f64 {
        self.sink_mass + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    /// `Σ_{w>0} P(w)·min(w, u)`.
    pub fn min_moment(&self, u: f64) -> f64 {
        self.atoms.iter().map(|&(q, p)| p * (q as f64 * self.rho / 4.0).min(u)).sum()
    }
}

pub fn descend_dp(rho: f64, start: LatticePoint) -> Result<DescentLaw, HoneycombError> {
    check_rho(rho)?;
    if start.layer < 0 {
        return Err(HoneycombError::BelowAxis(start));
    }
    let steps = start.layer;
    let offset = start.q - 3 * steps;
    let width = (6 * steps + 1) as usize;
    let mut cur = vec![0.0; width];
    let (mut sink_mass, mut sink_moment) = (0.0, 0.0);
    if start.q <= 0 {
        sink_mass = 1.0;
        sink_moment = start.q as f64;
    } else {
        cur[(start.q - offset) as usize] = 1.0;
    }
    let to_time = rho / 4.0;
    // Live mass stays within the index band [lo, hi).
    let (mut lo, mut hi) = ((start.q - offset) as usize, (start.q - offset) as usize + 1);
    let summary = |cur: &[f64], lo: usize, hi: usize, sm: f64, smom: f64| {
        let band = &cur[lo..hi];
        let mass = sm + band.iter().sum::<f64>();
        let moment = smom + band.iter().enumerate().map(|(i, p)| p * ((lo + i) as i64 + offset) as f64).sum::<f64>();
        (mass, moment * to_time)
    };
    let (m0, t0) = summary(&cur, lo, hi, sink_mass, sink_moment);
    let mut mass_by_layer = vec![m0];
    let mut mean_by_layer = vec![t0];
    let mut next = vec![0.0; width];
    for layer in (1..=steps).rev() {
        let (nlo, nhi) = (lo.saturating_sub(3), (hi + 3).min(width));
        next[nlo..nhi].iter_mut().for_each(|x| *x = 0.0);
        for i in lo..hi {
            let p = cur[i];
            if p == 0.0 {
                continue;
            }
            let q = i as i64 + offset;
            let here = LatticePoint::new(layer, q).expect("mass only on lattice vertices");
            let (a, b) = here.lower_pair();
            let pb = (q - a.q) as f64 / (b.q - a.q) as f64;
            for (to, w) in [(a.q, p * (1.0 - pb)), (b.q, p * pb)] {
                if to <= 0 {
                    sink_mass += w;
                    sink_moment += w * to as f64;
                } else {
                    next[(to - offset) as usize] += w;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        (lo, hi) = (nlo, nhi);
        let (m, t) = summary(&cur, lo, hi, sink_mass, sink_moment);
        mass_by_layer.push(m);
        mean_by_layer.push(t);
    }
    let atoms = cur
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as i64 + offset, p))
        .collect();
    Ok(DescentLaw { rho, start, atoms, sink_mass, sink_moment, mass_by_layer, mean_by_layer })
}

/// How the second argument `x` of the limit maps to a lattice height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum VerticalScaling {
    /// `4x/(√3ρ)`, as in the theorem statement.
    #[default]
    Statement,
    /// `√3x/(4ρ)`, as remarked in the proof.
    Proof,
}

impl VerticalScaling {
    pub fn height(self, rho: f64, x: f64) -> f64 {
        match self {
            VerticalScaling::Statement => 4.0 * x / (3f64.sqrt() * rho),
            VerticalScaling::Proof => 3f64.sqrt() * x / (4.0 * rho),
        }
    }

    /// Factor `c` such that the layer count is `c·x/ρ²` up to rounding.
    pub fn layer_factor(self) -> f64 {
        match self {
            VerticalScaling::Statement => 16.0 / 3.0,
            VerticalScaling::Proof => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteCovariance {
    pub rho: f64,
    pub u_point: LatticePoint,
    pub v_point: LatticePoint,
    pub value: f64,
    pub law: DescentLaw,
}

/// `E X(ū_ρ) X(v̄_ρ)` with `ū_ρ` nearest to `(u, 0)` and `v̄_ρ` nearest to
/// `(v, height(x))`.
pub fn finite_covariance(
    rho: f64,
    u: f64,
    v: f64,
    x: f64,
    scaling: VerticalScaling,
) -> Result<FiniteCovariance, HoneycombError> {
    check_rho(rho)?;
    if ![u, v, x].iter().all(|a| a.is_finite() && *a >= 0.0) {
        return Err(HoneycombError::BadArgument);
    }
    let u_point = nearest_vertex(rho, u, 0.0);
    let v_point = nearest_vertex(rho, v, scaling.height(rho, x));
    finite_covariance_at(rho, u_point, v_point)
}

/// Same, for explicit lattice points (`u_point` on layer 0).
pub fn finite_covariance_at(
    rho: f64,
    u_point: LatticePoint,
    v_point: LatticePoint,
) -> Result<FiniteCovariance, HoneycombError> {
    if u_point.layer != 0 {
        return Err(HoneycombError::BadSpec(format!("{u_point:?} is not on layer 0")));
    }
    let law = descend_dp(rho, v_point)?;
    let value = law.min_moment(u_point.time(rho).max(0.0));
    Ok(FiniteCovariance { rho, u_point, v_point, value, law })
}

/// The closed form of the scaling limit, with `2Φ(a)-1` evaluated as `erf(a)`.
pub fn limit_covariance(u: f64, v: f64, x: f64) -> f64 {
    if u == 0.0 || v == 0.0 {
        return 0.0;
    }
    let s = (5.0 * x).sqrt();
    let exp_part = s / (8.0 * std::f64::consts::PI.sqrt())
        * ((-16.0 * (u + v).powi(2) / (5.0 * x)).exp() - (-16.0 * (u - v).powi(2) / (5.0 * x)).exp());
    exp_part - 0.5 * (u - v) * libm::erf(4.0 * (u - v) / s) + 0.5 * (u + v) * libm::erf(4.0 * (u + v) / s)
}

/// `∫_0^∞ min(s,u) (φ_σ(s-v) - φ_σ(s+v)) ds`, `σ² = 5x/32`, by adaptive Simpson.
pub fn limit_covariance_quadrature(u: f64, v: f64, x: f64) -> f64 {
    if u == 0.0 || v == 0.0 {
        return 0.0;
    }
    let sigma = (5.0 * x / 32.0).sqrt();
    let phi = |z: f64| (-z * z / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let f = |s: f64| s.min(u) * (phi(s - v) - phi(s + v));
    let end = v + 40.0 * sigma;
    let mut total = 0.0;
    let mut cuts = vec![0.0, u.min(end), end];
    if v < end && v > 0.0 {
        cuts.push(v);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for w in cuts.windows(2) {
        total += simpson(&f, w[0], w[1], 1e-14);
    }
    total
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub rho: f64,
    pub finite: f64,
    pub limit: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub cauchy_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub scaling: VerticalScaling,
    pub rows: Vec<ConvergenceRow>,
    /// `c` with `limit(u, v, c·x)` equal to the finest finite value.
    pub fitted_factor: Option<f64>,
}

impl ConvergenceTable {
    pub fn cauchy_decreasing(&self) -> bool {
        let d: Vec<f64> = self.rows.iter().filter_map(|r| r.cauchy_diff).collect();
        d.windows(2).all(|w| w[1] < w[0])
    }

    pub fn last(&self) -> Option<&ConvergenceRow> {
        self.rows.last()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rho", "finite", "limit", "abs_err", "rel_err", "cauchy_diff"])?;
        for r in &self.rows {
            w.write_record([
                format!("{}", r.rho),
                format!("{:.15e}", r.finite),
                format!("{:.15e}", r.limit),
                format!("{:.15e}", r.abs_err),
                format!("{:.15e}", r.rel_err),
                r.cauchy_diff.map(|d| format!("{d:.15e}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn convergence_study(
    u: f64,
    v: f64,
    x: f64,
    rhos: &[f64],
    scaling: VerticalScaling,
) -> Result<ConvergenceTable, HoneycombError> {
    if rhos.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(HoneycombError::BadSpec("rhos must be strictly decreasing".into()));
    }
    let limit = limit_covariance(u, v, x);
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let finite = finite_covariance(rho, u, v, x, scaling)?.value;
        let abs_err = (finite - limit).abs();
        let rel_err = if limit == 0.0 { abs_err } else { abs_err / limit.abs() };
        let cauchy_diff = rows.last().map(|r| (r.finite - finite).abs());
        rows.push(ConvergenceRow { rho, finite, limit, abs_err, rel_err, cauchy_diff });
    }
    let fitted_factor = rows.last().and_then(|r| fit_factor(u, v, x, r.finite));
    Ok(ConvergenceTable { u, v, x, scaling, rows, fitted_factor })
}

/// Bisection for `c` in `[1e-3, 1e3]` (log scale) with `limit(u,v,c·x) = target`.
pub fn fit_factor(u: f64, v: f64, x: f64, target: f64) -> Option<f64> {
    if u == 0.0 || v == 0.0 || x <= 0.0 {
        return None;
    }
    let g = |lc: f64| limit_covariance(u, v, lc.exp() * x) - target;
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e3f64.ln());
    let (glo, ghi) = (g(lo), g(hi));
    if glo.signum() == ghi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid).signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}

/// Natural Brownian motion on `G_*` versus the descent DP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheck {
    pub rho: f64,
    pub u_point: LatticePoint,
    pub v_point: LatticePoint,
    pub window_vertices: usize,
    pub window_edges: usize,
    pub dp: f64,
    pub engine: f64,
    pub estimate: McEstimate,
}

impl McCheck {
    pub fn agrees(&self, k: f64) -> bool {
        self.estimate.agrees(self.dp, k)
    }
}

/// Exact engine value and Monte Carlo estimate of `E X(ū)X(v̄)` on the
/// descent window under the pinned two-sided law.
pub fn monte_carlo_check(
    rho: f64,
    u: f64,
    v: f64,
    x: f64,
    scaling: VerticalScaling,
    n: usize,
    seed: u64,
) -> Result<McCheck, HoneycombError> {
    let fc = finite_covariance(rho, u, v, x, scaling)?;
    let (u_point, v_point) = (fc.u_point, fc.v_point);
    let window = descent_window(rho, v_point, (u_point.time(rho), u_point.time(rho)))?;
    let setup = NaturalSetup::new(&window.graph, None)?;
    let law = Law::PinnedTwoSided { drift: 0.0 };
    let field = setup.field(law)?;
    let addr = |p: LatticePoint| PointAddress::Vertex(window.id_of(p).expect("query point in window"));
    let pu = setup.resolve(&field, &addr(u_point))?;
    let pv = setup.resolve(&field, &addr(v_point))?;
    let engine = field.second_moment(pu, pv);
    let sampler = Sampler::new(&setup.graph, &setup.tower, &setup.grid, law)?;
    let estimate = sampler.mc_covariance(pu, pv, n, seed)?;
    Ok(McCheck {
        rho,
        u_point,
        v_point,
        window_vertices: window.graph.vertex_count(),
        window_edges: window.graph.edge_count(),
        dp: fc.value,
        engine,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncc::is_ncc;
    use crate::validate::{collapse, validate_tlg};
    use approx::assert_abs_diff_eq;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn lattice_neighbours_are_symmetric_and_unit_length() {
        let rho = 1.0;
        for layer in -3..4 {
            for q in -12..12 {
                let Some(p) = LatticePoint::new(layer, q) else { continue };
                for n in p.neighbours() {
                    assert!(LatticePoint::is_vertex(n.layer, n.q), "{p:?} -> {n:?}");
                    assert!(n.neighbours().contains(&p), "{p:?} <-> {n:?}");
                    let d = ((n.time(rho) - p.time(rho)).powi(2) + (n.height(rho) - p.height(rho)).powi(2)).sqrt();
                    assert_abs_diff_eq!(d, 0.5, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn lower_pair_offsets() {
        let offs = |layer, q| {
            let p = LatticePoint::new(layer, q).unwrap();
            let (a, b) = p.lower_pair();
            assert_eq!((a.layer, b.layer), (layer - 1, layer - 1));
            (a.q - q, b.q - q)
        };
        assert_eq!(offs(1, 1), (-1, 3));
        assert_eq!(offs(2, 4), (-1, 3));
        assert_eq!(offs(1, 3), (-3, 1));
        assert_eq!(offs(2, 0), (-3, 1));
        assert_eq!(offs(-1, -5), (-1, 3));
    }

    #[test]
    fn nearest_vertex_rules() {
        let rho = 0.4;
        let p = LatticePoint::new(3, 7).unwrap();
        assert_eq!(nearest_vertex(rho, p.time(rho), p.height(rho)), p);
        // Midpoint of the horizontal edge (4,0)-(6,0): smaller time wins.
        assert_eq!(nearest_vertex(rho, 5.0 * rho / 4.0, 0.0), LatticePoint::new(0, 4).unwrap());
        // Hexagon centre: six equidistant vertices, the earliest lowest wins.
        assert_eq!(nearest_vertex(rho, 2.0 * rho / 4.0, 0.0), LatticePoint::new(0, 0).unwrap());
        for &(v, x) in &[(0.3, 0.7), (1.1, 0.05), (0.0, 2.0)] {
            let y = VerticalScaling::Statement.height(rho, x);
            let n = nearest_vertex(rho, v, y);
            let d = ((n.time(rho) - v).powi(2) + (n.height(rho) - y).powi(2)).sqrt();
            assert!(d <= rho, "{d}");
        }
        let spec = HexWindowSpec { rho, t_min: 0.0, t_max: 1.0, j_max: 2 };
        assert!(matches!(spec.nearest_vertex(2.0, 0.0), Err(HoneycombError::OutOfExtent { .. })));
        assert!(spec.nearest_vertex(0.5, 0.2).is_ok());
    }

    #[test]
    fn one_hexagon_is_one_cell() {
        let w = hex_window(&HexWindowSpec { rho: 1.0, t_min: -0.01, t_max: 1.01, j_max: 1 }).unwrap();
        assert_eq!(w.lattice_vertex_count(), 6);
        assert_eq!(w.graph.vertex_count(), 8);
        assert!(validate_tlg(&w.graph, Mode::Relaxed).is_valid());
        let c = collapse(&w.graph);
        assert_eq!(c.graph.vertex_count(), 4);
        assert_eq!(c.graph.edge_count(), 4);
        assert!(is_ncc(&c.graph).is_ncc());
        for (id, p) in w.points.iter().enumerate() {
            if let Some(p) = p {
                let (_, y) = w.coordinates(id as VertexId).unwrap();
                assert_eq!(y, p.layer as f64 * 3f64.sqrt() / 4.0);
            }
        }
    }

    #[test]
    fn stacked_hexagons_are_ncc() {
        let w = hex_window(&HexWindowSpec { rho: 1.0, t_min: -0.01, t_max: 1.01, j_max: 3 }).unwrap();
        assert_eq!(w.lattice_vertex_count(), 10);
        let (a, b) = (w.id_of(LatticePoint { layer: 1, q: 1 }).unwrap(), w.id_of(LatticePoint { layer: 1, q: 3 }).unwrap());
        assert!(w.graph.find_edge(a, b, 0).is_some(), "shared edge");
        assert!(validate_tlg(&w.graph, Mode::Relaxed).is_valid());
        let c = collapse(&w.graph);
        assert!(validate_tlg(&c.graph, Mode::Strict).is_valid());
        assert!(is_ncc(&c.graph).is_ncc());
        let json: serde_json::Value = serde_json::from_str(&w.to_json()).unwrap();
        assert_eq!(json["points"].as_array().unwrap().len(), w.graph.vertex_count());
    }

    #[test]
    fn wider_windows_are_valid_and_ncc() {
        for (t0, t1, j) in [(-0.3, 2.2, 2), (0.0, 3.0, 4), (-1.0, 1.5, 5)] {
            let w = hex_window(&HexWindowSpec { rho: 0.5, t_min: t0, t_max: t1, j_max: j }).unwrap();
            assert!(validate_tlg(&w.graph, Mode::Relaxed).is_valid(), "{t0} {t1} {j}");
            assert!(is_ncc(&collapse(&w.graph).graph).is_ncc());
        }
        assert_eq!(
            hex_window(&HexWindowSpec { rho: 1.0, t_min: 0.1, t_max: 0.2, j_max: 0 }).unwrap_err(),
            HoneycombError::EmptyWindow
        );
        assert!(matches!(
            hex_window(&HexWindowSpec { rho: 1.0, t_min: 1.0, t_max: 0.0, j_max: 1 }),
            Err(HoneycombError::BadSpec(_))
        ));
    }

    #[test]
    fn chain_constants() {
        let c = ChainSpec::paper();
        assert!(c.rows_stochastic());
        assert_eq!(ChainSpec::from_lattice(), c);
        assert_eq!(c.stationary(), [r(1, 8), r(3, 8), r(3, 8), r(1, 8)]);
        let pw = c.stationary_power(200);
        for (a, b) in pw.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((a - b).abs() <= 1e-14);
        }
        assert_eq!(c.mean(), Rational64::zero());
        // The paper states 5/32; the displayed sum evaluates to 3/16.
        assert_eq!(c.second_moment(), r(3, 16));
        assert_eq!(step_variance(0.5), 3.0 / 64.0);
    }

    #[test]
    fn one_step_probabilities() {
        let law = descend_dp(1.0, LatticePoint::new(1, 7).unwrap()).unwrap();
        assert_eq!(law.atoms, vec![(6, 0.75), (10, 0.25)]);
        let law = descend_dp(1.0, LatticePoint::new(0, 4).unwrap()).unwrap();
        assert_eq!(law.atoms, vec![(4, 1.0)]);
        let law = descend_dp(1.0, LatticePoint::new(1, 1).unwrap()).unwrap();
        assert_eq!(law.atoms, vec![(4, 0.25)]);
        assert_eq!(law.sink_mass, 0.75);
        assert!(descend_dp(1.0, LatticePoint::new(-1, 1).unwrap()).is_err());
    }

    #[test]
    fn dp_conserves_mass_and_mean() {
        let rho = 0.1;
        let start = nearest_vertex(rho, 0.3, VerticalScaling::Statement.height(rho, 0.5));
        let law = descend_dp(rho, start).unwrap();
        let t0 = start.time(rho);
        for (m, t) in law.mass_by_layer.iter().zip(&law.mean_by_layer) {
            assert!((m - 1.0).abs() <= 1e-12);
            assert!((t - t0).abs() <= 1e-12, "{t} vs {t0}");
        }
        assert!((law.total_mass() - 1.0).abs() <= 1e-12);
        assert!(law.sink_mass > 0.0);
    }

    #[test]
    fn finite_covariance_edge_cases() {
        let rho = 0.2;
        let fc = finite_covariance(rho, 0.0, 0.5, 1.0, VerticalScaling::Statement).unwrap();
        assert_eq!(fc.value, 0.0);
        let fc = finite_covariance(rho, 0.7, 0.45, 0.0, VerticalScaling::Statement).unwrap();
        assert_eq!(fc.v_point.layer, 0);
        assert_eq!(fc.value, fc.u_point.time(rho).min(fc.v_point.time(rho)));
        assert!(finite_covariance(rho, -1.0, 0.5, 1.0, VerticalScaling::Statement).is_err());
    }

    #[test]
    fn finite_covariance_swapped_queries() {
        // Swap the roles: the walk from each point, evaluated at the other's layer-0 shadow.
        let rho = 0.2;
        let (u, v) = (LatticePoint::new(0, 6).unwrap(), LatticePoint::new(0, 12).unwrap());
        let a = finite_covariance_at(rho, u, v).unwrap().value;
        let b = finite_covariance_at(rho, v, u).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn limit_formula_properties() {
        assert_eq!(limit_covariance(0.0, 0.4, 1.0), 0.0);
        let tiny = limit_covariance(1e-300, 0.4, 1.0);
        assert!(tiny.abs() < 1e-200);
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let (u, v, x) = (next() * 2.0, next() * 2.0, 0.05 + next() * 3.0);
            let (a, b) = (limit_covariance(u, v, x), limit_covariance(v, u, x));
            assert!((a - b).abs() <= 1e-12);
        }
        let oracle = limit_covariance_quadrature(0.5, 0.5, 1.0);
        assert!((limit_covariance(0.5, 0.5, 1.0) - oracle).abs() <= 1e-8, "{oracle}");
        assert_abs_diff_eq!(oracle, 0.34302622683868, epsilon = 1e-10);
        for &(u, v, x) in &[(0.2, 0.9, 0.3), (1.5, 0.4, 2.0), (0.05, 0.05, 0.01)] {
            assert!((limit_covariance(u, v, x) - limit_covariance_quadrature(u, v, x)).abs() <= 1e-8);
        }
    }

    #[test]
    fn small_x_limit_is_min() {
        assert_abs_diff_eq!(limit_covariance(0.3, 0.7, 1e-9), 0.3, epsilon = 1e-12);
        let rho = 0.1;
        let fc = finite_covariance(rho, 0.33, 0.71, 1e-9, VerticalScaling::Statement).unwrap();
        let err = (fc.value - limit_covariance(0.33, 0.71, 1e-9)).abs();
        // Layer-0 vertices are at most 2ρ/4 apart.
        assert!(err <= rho / 2.0, "{err}");
    }

    #[test]
    fn convergence_table() {
        let t = convergence_study(0.5, 0.5, 1.0, &[0.4, 0.2, 0.1], VerticalScaling::Proof).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows[0].cauchy_diff.is_none());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("rho,finite,limit,abs_err,rel_err,cauchy_diff\n"));
        assert_eq!(s.lines().count(), 4);
        let z = convergence_study(0.0, 0.5, 1.0, &[0.4, 0.2], VerticalScaling::Statement).unwrap();
        assert!(z.rows.iter().all(|r| r.finite == 0.0 && r.limit == 0.0 && r.abs_err == 0.0));
        assert!(convergence_study(0.5, 0.5, 1.0, &[0.1, 0.2], VerticalScaling::Proof).is_err());
    }

    #[test]
    fn fitted_factor_recovers_scale() {
        let target = limit_covariance(0.5, 0.5, 1.2);
        let c = fit_factor(0.5, 0.5, 1.0, target).unwrap();
        assert_abs_diff_eq!(c, 1.2, epsilon = 1e-9);
    }

    #[test]
    fn descent_window_engine_matches_dp() {
        let rho = 0.25;
        let x = 0.05;
        for &(u, v) in &[(0.5, 0.5), (0.3, 0.6), (0.8, 0.4)] {
            let fc = finite_covariance(rho, u, v, x, VerticalScaling::Statement).unwrap();
            let w = descent_window(rho, fc.v_point, (fc.u_point.time(rho), fc.u_point.time(rho))).unwrap();
            assert!(validate_tlg(&w.graph, Mode::Relaxed).is_valid());
            let setup = NaturalSetup::new(&w.graph, None).unwrap();
            let field = setup.field(Law::PinnedTwoSided { drift: 0.0 }).unwrap();
            let pu = setup.resolve(&field, &PointAddress::Vertex(w.id_of(fc.u_point).unwrap())).unwrap();
            let pv = setup.resolve(&field, &PointAddress::Vertex(w.id_of(fc.v_point).unwrap())).unwrap();
            let engine = field.second_moment(pu, pv);
            assert!((engine - fc.value).abs() <= 1e-12, "{u} {v}: engine {engine} dp {}", fc.value);
        }
    }

    #[test]
    fn monte_carlo_small() {
        let c = monte_carlo_check(0.25, 0.5, 0.5, 0.05, VerticalScaling::Statement, 4000, 11).unwrap();
        assert!((c.engine - c.dp).abs() <= 1e-12);
        assert!(c.agrees(4.0), "{c:?}");
    }
}

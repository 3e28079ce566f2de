//! Harness conditional expectations through the embedded random walk.
//!
//! A full time path `σ*` supports an edge point `t*` when the component of
//! the graph minus `σ*` containing `t*` is a tree. Peeling that tree level by
//! level gives the backward filtration `H_1 ⊃ … ⊃ H_K`, and the conditional
//! mean of `X(t*)` given `H_m` is the hitting law of a one-dimensional walk
//! started at `t*`.

use std::collections::{BTreeMap, HashMap};
use std::io;

use fixedbitset::FixedBitSet;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::gauss::{conditional_coeffs, build_field, ConditionError, FieldError, GridError, Law, SampleGrid, SamplePoint};
use crate::graph::{EdgeIdx, Mode, TimeLikeGraph, VertexId};
use crate::paths::TimePath;
use crate::tower::{build_tower, TowerError};
use crate::validate::validate_tlg;

/// Largest denominator accepted when reading a vertex time as a rational.
pub const MAX_DENOMINATOR: i128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("harness walks need a valid strict graph")]
    NotStrict,
    #[error("sigma* is not a full time path of the graph")]
    NotFullPath,
    #[error("no edge with index {0}")]
    UnknownEdge(EdgeIdx),
    #[error("t* = {time} is not interior to edge {edge}")]
    NotInterior { edge: EdgeIdx, time: f64 },
    #[error("t* lies on sigma* (edge {0})")]
    OnSigmaStar(EdgeIdx),
    #[error("component of t* is not a tree ({nodes} nodes, {edges} edges)")]
    NotTree { nodes: usize, edges: usize },
    #[error("vertex {vertex} has {degree} neighbours at its level, expected 2")]
    Degree { vertex: VertexId, degree: usize },
    #[error("neighbours of vertex {0} do not straddle it in time")]
    NoStraddle(VertexId),
    #[error("vertex {0} is reached twice within one level")]
    Overlap(VertexId),
    #[error("level {m} outside 1..={k}")]
    LevelOutOfRange { m: usize, k: usize },
    #[error("no value for vertex {0}")]
    MissingValue(VertexId),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
}

impl From<GridError> for HarnessError {
    fn from(e: GridError) -> Self {
        HarnessError::Field(FieldError::Grid(e))
    }
}

/// A point interior to an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgePoint {
    pub edge: EdgeIdx,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportDecomposition {
    pub sigma_star: TimePath,
    pub t_star: EdgePoint,
    /// Off-path vertices of the component.
    pub component_vertices: Vec<VertexId>,
    pub component_edges: Vec<EdgeIdx>,
    /// Edge ends landing on `σ*`; each is its own leaf of the component.
    pub boundary_leaves: usize,
    pub is_tree: bool,
}

impl SupportDecomposition {
    pub fn node_count(&self) -> usize {
        self.component_vertices.len() + self.boundary_leaves
    }
}

struct PathSets {
    vertices: FixedBitSet,
    edges: FixedBitSet,
}

fn path_sets(g: &TimeLikeGraph, sigma: &TimePath) -> Result<PathSets, HarnessError> {
    if !sigma.is_full(g) {
        return Err(HarnessError::NotFullPath);
    }
    let mut vertices = FixedBitSet::with_capacity(g.vertex_count());
    let mut edges = FixedBitSet::with_capacity(g.edge_count());
    for &id in &sigma.vertices {
        vertices.insert(g.vx(id));
    }
    for k in sigma.edges(g).map_err(|_| HarnessError::NotFullPath)? {
        edges.insert(k);
    }
    Ok(PathSets { vertices, edges })
}

/// Finds the component of `t*` in the graph minus `σ*` and decides whether it
/// is a tree by counting.
pub fn support_check(g: &TimeLikeGraph, sigma: &TimePath, t_star: EdgePoint) -> Result<SupportDecomposition, HarnessError> {
    if !validate_tlg(g, Mode::Strict).is_valid() {
        return Err(HarnessError::NotStrict);
    }
    let on = path_sets(g, sigma)?;
    let e = t_star.edge;
    if e >= g.edge_count() {
        return Err(HarnessError::UnknownEdge(e));
    }
    let (a, b) = g.edge_times(e);
    if !(t_star.time > a && t_star.time < b) {
        return Err(HarnessError::NotInterior { edge: e, time: t_star.time });
    }
    if on.edges.contains(e) {
        return Err(HarnessError::OnSigmaStar(e));
    }

    let mut seen_e = FixedBitSet::with_capacity(g.edge_count());
    let mut seen_v = FixedBitSet::with_capacity(g.vertex_count());
    let mut stack = Vec::new();
    let mut leaves = 0;
    seen_e.insert(e);
    for v in [g.tail(e), g.head(e)] {
        if on.vertices.contains(v) {
            leaves += 1;
        } else if !seen_v.put(v) {
            stack.push(v);
        }
    }
    while let Some(v) = stack.pop() {
        for &k in g.in_edges(v).iter().chain(g.out_edges(v)) {
            if seen_e.put(k) {
                continue;
            }
            let w = if g.tail(k) == v { g.head(k) } else { g.tail(k) };
            if on.vertices.contains(w) {
                leaves += 1;
            } else if !seen_v.put(w) {
                stack.push(w);
            }
        }
    }
    let component_vertices: Vec<VertexId> = seen_v.ones().map(|ix| g.id(ix)).collect();
    let component_edges: Vec<EdgeIdx> = seen_e.ones().collect();
    let is_tree = component_vertices.len() + leaves == component_edges.len() + 1;
    Ok(SupportDecomposition {
        sigma_star: sigma.clone(),
        t_star,
        component_vertices,
        component_edges,
        boundary_leaves: leaves,
        is_tree,
    })
}

/// `N(t_i)` for one vertex of `W_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Descent {
    pub vertex: VertexId,
    /// `[vertex]` on `σ*`, otherwise the earlier and the later neighbour.
    pub to: Vec<VertexId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    /// `W_m`, sorted by time.
    pub w: Vec<VertexId>,
    /// Vertices still present in `G_m`.
    pub graph_vertices: Vec<VertexId>,
    /// Edges still present in `G_m`.
    pub graph_edges: Vec<EdgeIdx>,
    /// `N(t_i)` for each `t_i ∈ W_m`; empty at the last level.
    pub descendants: Vec<Descent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiltrationLevels {
    pub t_star: EdgePoint,
    pub sigma_star: TimePath,
    /// `levels[m - 1]` is level `m`.
    pub levels: Vec<Level>,
}

impl FiltrationLevels {
    /// `K`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, m: usize) -> Result<&Level, HarnessError> {
        if m == 0 || m > self.depth() {
            return Err(HarnessError::LevelOutOfRange { m, k: self.depth() });
        }
        Ok(&self.levels[m - 1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("levels serialize")
    }
}

/// Builds `W_m`, `G_m` and the descendant maps until `W_K ⊆ σ*`.
pub fn filtration_levels(g: &TimeLikeGraph, support: &SupportDecomposition) -> Result<FiltrationLevels, HarnessError> {
    if !support.is_tree {
        return Err(HarnessError::NotTree { nodes: support.node_count(), edges: support.component_edges.len() });
    }
    let on = path_sets(g, &support.sigma_star)?;
    let e = support.t_star.edge;
    let mut alive_e = FixedBitSet::with_capacity(g.edge_count());
    alive_e.insert_range(..);
    alive_e.set(e, false);
    let mut alive_v = FixedBitSet::with_capacity(g.vertex_count());
    alive_v.insert_range(..);

    let mut w = vec![g.tail(e), g.head(e)];
    let mut levels = Vec::new();
    loop {
        let mut level = Level {
            w: w.iter().map(|&ix| g.id(ix)).collect(),
            graph_vertices: alive_v.ones().map(|ix| g.id(ix)).collect(),
            graph_edges: alive_e.ones().collect(),
            descendants: Vec::new(),
        };
        if w.iter().all(|&ix| on.vertices.contains(ix)) {
            levels.push(level);
            break;
        }
        let in_w: FixedBitSet = {
            let mut s = FixedBitSet::with_capacity(g.vertex_count());
            w.iter().for_each(|&ix| s.insert(ix));
            s
        };
        let mut next = FixedBitSet::with_capacity(g.vertex_count());
        let mut reached_off = FixedBitSet::with_capacity(g.vertex_count());
        for &v in &w {
            if on.vertices.contains(v) {
                next.insert(v);
                level.descendants.push(Descent { vertex: g.id(v), to: vec![g.id(v)] });
                continue;
            }
            let incident: Vec<EdgeIdx> =
                g.in_edges(v).iter().chain(g.out_edges(v)).copied().filter(|&k| alive_e.contains(k)).collect();
            if incident.len() != 2 {
                return Err(HarnessError::Degree { vertex: g.id(v), degree: incident.len() });
            }
            let mut nb: Vec<usize> =
                incident.iter().map(|&k| if g.tail(k) == v { g.head(k) } else { g.tail(k) }).collect();
            nb.sort_by(|&x, &y| g.time(x).total_cmp(&g.time(y)));
            if !(g.time(nb[0]) < g.time(v) && g.time(v) < g.time(nb[1])) {
                return Err(HarnessError::NoStraddle(g.id(v)));
            }
            for &u in &nb {
                if in_w.contains(u) {
                    return Err(HarnessError::Overlap(g.id(u)));
                }
                if !on.vertices.contains(u) && reached_off.put(u) {
                    return Err(HarnessError::Overlap(g.id(u)));
                }
                next.insert(u);
            }
            level.descendants.push(Descent { vertex: g.id(v), to: nb.iter().map(|&u| g.id(u)).collect() });
        }
        levels.push(level);
        for &v in &w {
            if !next.contains(v) {
                alive_v.set(v, false);
                for &k in g.in_edges(v).iter().chain(g.out_edges(v)) {
                    alive_e.set(k, false);
                }
            }
        }
        w = next.ones().collect();
        if levels.len() > g.vertex_count() {
            unreachable!("every level removes at least one vertex");
        }
    }
    Ok(FiltrationLevels { t_star: support.t_star, sigma_star: support.sigma_star.clone(), levels })
}

/// One absorbing point of the walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub vertex: VertexId,
    pub time: f64,
    pub prob: f64,
    /// Exact probability as `p/q` when the rational path was taken.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
}

/// Law of `β(σ_m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionDistribution {
    pub level: usize,
    pub atoms: Vec<Atom>,
    pub exact: bool,
}

impl AbsorptionDistribution {
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// `Σ P · time`; equals `t*` by the martingale property.
    pub fn mean_time(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.time).sum()
    }

    pub fn weights(&self) -> Vec<(VertexId, f64)> {
        self.atoms.iter().map(|a| (a.vertex, a.prob)).collect()
    }

    pub fn prob(&self, id: VertexId) -> f64 {
        self.atoms.iter().find(|a| a.vertex == id).map_or(0.0, |a| a.prob)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vertex", "time", "probability", "exact"])?;
        for a in &self.atoms {
            w.write_record([
                a.vertex.to_string(),
                format!("{:.17e}", a.time),
                format!("{:.17e}", a.prob),
                a.exact.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `t` as the smallest-denominator rational that rounds to it.
pub fn snap_rational(t: f64) -> Option<BigRational> {
    if !t.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut x = t;
    for _ in 0..64 {
        let a = x.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i128;
        let (h, k) = (a * h1 + h0, a * k1 + k0);
        if k > MAX_DENOMINATOR {
            return None;
        }
        if h as f64 / k as f64 == t {
            return Some(BigRational::new(BigInt::from(h), BigInt::from(k)));
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        let frac = x - a as f64;
        if frac <= 0.0 {
            return None;
        }
        x = 1.0 / frac;
    }
    None
}

fn propagate<W: Num + Clone>(
    g: &TimeLikeGraph,
    levels: &FiltrationLevels,
    m: usize,
    time: &dyn Fn(VertexId) -> W,
    t_star: W,
) -> BTreeMap<VertexId, W> {
    let e = g.edge(levels.t_star.edge);
    let (a, b) = (time(e.from), time(e.to));
    let span = b.clone() - a.clone();
    let mut dist = BTreeMap::new();
    dist.insert(e.to, (t_star.clone() - a.clone()) / span.clone());
    dist.insert(e.from, (b - t_star) / span);
    for level in &levels.levels[..m - 1] {
        let mut next: BTreeMap<VertexId, W> = BTreeMap::new();
        for d in &level.descendants {
            let p = dist.get(&d.vertex).cloned().unwrap_or_else(W::zero);
            let mut add = |v: VertexId, q: W| {
                let slot = next.entry(v).or_insert_with(W::zero);
                *slot = slot.clone() + q;
            };
            match d.to.as_slice() {
                [same] => add(*same, p),
                [lo, hi] => {
                    let (tl, th, tv) = (time(*lo), time(*hi), time(d.vertex));
                    let span = th.clone() - tl.clone();
                    add(*hi, p.clone() * (tv.clone() - tl) / span.clone());
                    add(*lo, p * (th - tv) / span);
                }
                _ => unreachable!("descent lists hold one or two vertices"),
            }
        }
        dist = next;
    }
    dist
}

impl FiltrationLevels {
    /// Exact level-`m` hitting law, in rationals when every time involved
    /// reads as a rational with denominator at most [`MAX_DENOMINATOR`].
    pub fn distribution(&self, g: &TimeLikeGraph, m: usize) -> Result<AbsorptionDistribution, HarnessError> {
        self.level(m)?;
        let ids: Vec<VertexId> = g.vertices().iter().map(|v| v.id).collect();
        let exact_times: Option<HashMap<VertexId, BigRational>> =
            ids.iter().map(|&id| snap_rational(g.time(g.vx(id))).map(|r| (id, r))).collect();
        let exact_star = snap_rational(self.t_star.time);
        let atoms = match (exact_times, exact_star) {
            (Some(times), Some(ts)) => {
                let dist = propagate(g, self, m, &|id| times[&id].clone(), ts);
                dist.into_iter()
                    .filter(|(_, p)| !num_traits::Zero::is_zero(p))
                    .map(|(id, p)| Atom {
                        vertex: id,
                        time: g.time(g.vx(id)),
                        prob: p.to_f64().expect("finite ratio"),
                        exact: Some(p.to_string()),
                    })
                    .collect::<Vec<_>>()
            }
            _ => {
                let dist = propagate(g, self, m, &|id| g.time(g.vx(id)), self.t_star.time);
                dist.into_iter()
                    .filter(|(_, p)| *p != 0.0)
                    .map(|(id, p)| Atom { vertex: id, time: g.time(g.vx(id)), prob: p, exact: None })
                    .collect()
            }
        };
        let exact = atoms.iter().all(|a: &Atom| a.exact.is_some());
        Ok(AbsorptionDistribution { level: m, atoms, exact })
    }

    /// Pushes a level-`m` law one level further with floating arithmetic.
    pub fn push(&self, g: &TimeLikeGraph, dist: &AbsorptionDistribution) -> Result<AbsorptionDistribution, HarnessError> {
        let level = self.level(dist.level)?;
        self.level(dist.level + 1)?;
        let mut next: BTreeMap<VertexId, f64> = BTreeMap::new();
        for d in &level.descendants {
            let p = dist.prob(d.vertex);
            match d.to.as_slice() {
                [same] => *next.entry(*same).or_default() += p,
                [lo, hi] => {
                    let (tl, th, tv) = (g.time(g.vx(*lo)), g.time(g.vx(*hi)), g.time(g.vx(d.vertex)));
                    *next.entry(*hi).or_default() += p * (tv - tl) / (th - tl);
                    *next.entry(*lo).or_default() += p * (th - tv) / (th - tl);
                }
                _ => unreachable!("descent lists hold one or two vertices"),
            }
        }
        let atoms = next
            .into_iter()
            .filter(|(_, p)| *p != 0.0)
            .map(|(id, p)| Atom { vertex: id, time: g.time(g.vx(id)), prob: p, exact: None })
            .collect();
        Ok(AbsorptionDistribution { level: dist.level + 1, atoms, exact: false })
    }
}

/// Support check, filtration and the level-`m` walk law in one call.
pub fn walk_distribution(
    g: &TimeLikeGraph,
    sigma: &TimePath,
    t_star: EdgePoint,
    m: usize,
) -> Result<AbsorptionDistribution, HarnessError> {
    let support = support_check(g, sigma, t_star)?;
    filtration_levels(g, &support)?.distribution(g, m)
}

/// `Σ P(β(σ_m) = t_i) X(t_i)`.
pub fn conditional_expectation(
    values: &HashMap<VertexId, f64>,
    weights: &AbsorptionDistribution,
) -> Result<f64, HarnessError> {
    weights
        .atoms
        .iter()
        .map(|a| values.get(&a.vertex).map(|x| a.prob * x).ok_or(HarnessError::MissingValue(a.vertex)))
        .sum()
}

/// Walk weights against Gaussian conditioning on the vertices of `G_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianComparison {
    pub level: usize,
    pub vertices: Vec<VertexId>,
    pub walk: Vec<f64>,
    pub gauss: Vec<f64>,
    pub deterministic: Vec<VertexId>,
    /// `|intercept − Σ_det w_i E X(t_i)|`.
    pub intercept_diff: f64,
    pub max_diff: f64,
}

/// Conditions the natural field on every vertex of `G_m` and compares the
/// resulting affine functional with the level-`m` walk. Zero-variance
/// conditioners enter through the intercept.
pub fn compare_with_gaussian(
    g: &TimeLikeGraph,
    levels: &FiltrationLevels,
    m: usize,
    law: Law,
) -> Result<GaussianComparison, HarnessError> {
    let dist = levels.distribution(g, m)?;
    let level = levels.level(m)?;
    let tower = build_tower(g).map_err(|e| match e {
        TowerError::NotNcc { witness } => FieldError::NotNcc { witness },
        TowerError::Stalled { .. } => FieldError::InvalidTower(Default::default()),
    })?;
    let mut grid = SampleGrid::vertices_only(g);
    grid.insert(levels.t_star.edge, levels.t_star.time)?;
    let field = build_field(g, &tower, &grid, law)?;
    let target = field.points().point(SamplePoint { edge: levels.t_star.edge, index: 1 }).expect("t* on grid");
    let vertices = level.graph_vertices.clone();
    let conditioners: Vec<usize> = vertices.iter().map(|&id| field.vertex(id).expect("vertex in field")).collect();
    let c = conditional_coeffs(&field, target, &conditioners)?;
    let walk: Vec<f64> = vertices.iter().map(|&id| dist.prob(id)).collect();
    let mut max_diff: f64 = 0.0;
    let mut folded = 0.0;
    let mut deterministic = Vec::new();
    for (i, (&w, &q)) in walk.iter().zip(&c.weights).enumerate() {
        if c.deterministic.contains(&i) {
            folded += w * field.mean(conditioners[i]);
            deterministic.push(vertices[i]);
        } else {
            max_diff = max_diff.max((w - q).abs());
        }
    }
    let intercept_diff = (c.intercept - folded).abs();
    Ok(GaussianComparison {
        level: m,
        vertices,
        walk,
        gauss: c.weights,
        deterministic,
        intercept_diff,
        max_diff: max_diff.max(intercept_diff),
    })
}

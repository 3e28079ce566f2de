//! Dubins' mean-splitting Skorokhod embedding and its time-like graph.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gauss::{build_field, FieldError, Law, SampleGrid, SamplePoint};
use crate::graph::{Mode, TimeLikeGraph, VertexId};
use crate::harness::{filtration_levels, support_check, EdgePoint, HarnessError};
use crate::paths::TimePath;
use crate::tower::build_tower;

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;

/// Default number of atoms for discretized continuous measures.
pub const DEFAULT_ATOMS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("measure has no atoms")]
    Empty,
    #[error("atom position {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("atom positions are not strictly increasing at {0}")]
    NotIncreasing(f64),
    #[error("atom weight {0} is not positive")]
    BadWeight(f64),
    #[error("weights sum to {0}, not 1")]
    Mass(f64),
}

/// Finitely many atoms in `[0, 1]`, strictly increasing, total mass 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<MeasureFile> for DiscreteMeasure {
    type Error = MeasureError;
    fn try_from(f: MeasureFile) -> Result<Self, MeasureError> {
        DiscreteMeasure::new(f.atoms)
    }
}

impl From<DiscreteMeasure> for MeasureFile {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureFile { atoms: m.atoms }
    }
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::Empty);
        }
        for (i, &(x, w)) in atoms.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(MeasureError::OutOfRange(x));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(MeasureError::BadWeight(w));
            }
            if i > 0 && atoms[i - 1].0 >= x {
                return Err(MeasureError::NotIncreasing(x));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::Mass(total));
        }
        Ok(DiscreteMeasure { atoms })
    }

    /// Sorts, merges equal positions and rescales to mass 1.
    pub fn normalized(mut atoms: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(MeasureError::Mass(total));
        }
        merged.iter_mut().for_each(|a| a.1 /= total);
        Self::new(merged)
    }

    pub fn dirac(a: f64) -> Result<Self, MeasureError> {
        Self::new(vec![(a, 1.0)])
    }

    /// Uniform on `[0, 1]` as `k` equal atoms at the cell midpoints; the W1
    /// distance to the continuous law is `1/(4k)`.
    pub fn uniform(k: usize) -> Self {
        let atoms = (0..k).map(|i| ((i as f64 + 0.5) / k as f64, 1.0 / k as f64)).collect();
        Self::new(atoms).expect("uniform atoms are valid")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serializes")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn mean(&self) -> f64 {
        range_mean(&self.atoms)
    }

    /// `∫ min(s, u) dμ(s) = ∫₀ᵘ s dμ + u μ((u, 1])`.
    pub fn min_moment(&self, u: f64) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * x.min(u)).sum()
    }
}

fn range_mean(atoms: &[(f64, f64)]) -> f64 {
    if let [(x, _)] = atoms {
        return *x;
    }
    let mass: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter().map(|&(x, w)| x * w).sum::<f64>() / mass
}

fn range_mass(atoms: &[(f64, f64)]) -> f64 {
    atoms.iter().map(|a| a.1).sum()
}

/// Splits at the mean: atoms below it and atoms at or above it, each
/// renormalized. A point mass is returned twice.
pub fn split(mu: &DiscreteMeasure) -> (DiscreteMeasure, DiscreteMeasure) {
    if mu.is_point() {
        return (mu.clone(), mu.clone());
    }
    let cut = split_index(&mu.atoms);
    let part = |a: &[(f64, f64)]| {
        let mass = range_mass(a);
        DiscreteMeasure { atoms: a.iter().map(|&(x, w)| (x, w / mass)).collect() }
    };
    (part(&mu.atoms[..cut]), part(&mu.atoms[cut..]))
}

fn split_index(atoms: &[(f64, f64)]) -> usize {
    let m = range_mean(atoms);
    let cut = atoms.partition_point(|a| a.0 < m);
    // Rounding in the mean must not empty either side.
    cut.clamp(1, atoms.len() - 1)
}

/// One node: the restriction of `μ` to `atoms[lo..hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DubinsNode {
    pub mean: f64,
    /// `μ(atoms[lo..hi])`.
    pub mass: f64,
    pub lo: usize,
    pub hi: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    /// `None` for a point mass or a node at the last level.
    pub children: Option<(usize, usize)>,
}

impl DubinsNode {
    pub fn is_point(&self) -> bool {
        self.hi - self.lo == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DubinsTree {
    pub measure: DiscreteMeasure,
    pub depth: usize,
    /// Root first; children follow their parents.
    pub nodes: Vec<DubinsNode>,
}

/// Splits down to depth `n`. Point masses stop splitting; they stand for
/// themselves at every later level.
pub fn dubins_tree(mu: &DiscreteMeasure, n: usize) -> DubinsTree {
    let atoms = &mu.atoms;
    let mut nodes = vec![DubinsNode {
        mean: mu.mean(),
        mass: 1.0,
        lo: 0,
        hi: atoms.len(),
        depth: 0,
        parent: None,
        children: None,
    }];
    let mut i = 0;
    while i < nodes.len() {
        let (lo, hi, depth) = (nodes[i].lo, nodes[i].hi, nodes[i].depth);
        if depth < n && hi - lo > 1 {
            let cut = lo + split_index(&atoms[lo..hi]);
            let base = nodes.len();
            for (a, b) in [(lo, cut), (cut, hi)] {
                nodes.push(DubinsNode {
                    mean: range_mean(&atoms[a..b]),
                    mass: range_mass(&atoms[a..b]),
                    lo: a,
                    hi: b,
                    depth: depth + 1,
                    parent: Some(i),
                    children: None,
                });
            }
            nodes[i].children = Some((base, base + 1));
        }
        i += 1;
    }
    DubinsTree { measure: mu.clone(), depth: n, nodes }
}

impl DubinsTree {
    /// Nodes standing at level `n`, sorted by mean.
    pub fn frontier(&self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| {
                let v = &self.nodes[i];
                v.depth == n || (v.depth < n && v.children.is_none())
            })
            .collect();
        out.sort_by(|&a, &b| self.nodes[a].mean.total_cmp(&self.nodes[b].mean));
        out
    }

    /// `H_n(μ)`.
    pub fn level(&self, n: usize) -> Vec<f64> {
        self.frontier(n).into_iter().map(|i| self.nodes[i].mean).collect()
    }

    pub fn levels(&self) -> Vec<Vec<f64>> {
        (0..=self.depth).map(|n| self.level(n)).collect()
    }

    /// Nested `{mean, mass, children}` form.
    pub fn to_nested_json(&self) -> serde_json::Value {
        fn node(t: &DubinsTree, i: usize) -> serde_json::Value {
            let v = &t.nodes[i];
            let children = match v.children {
                Some((a, b)) => vec![node(t, a), node(t, b)],
                None => Vec::new(),
            };
            serde_json::json!({ "mean": v.mean, "mass": v.mass, "children": children })
        }
        node(self, 0)
    }
}

/// Law of `β(τ_n)` from one-step gambler's ruin probabilities down the tree.
pub fn embedded_measure(tree: &DubinsTree, n: usize) -> DiscreteMeasure {
    let mut prob = vec![0.0; tree.nodes.len()];
    prob[0] = 1.0;
    for (i, v) in tree.nodes.iter().enumerate() {
        if let (Some((l, r)), true) = (v.children, v.depth < n) {
            let (ml, mr) = (tree.nodes[l].mean, tree.nodes[r].mean);
            let up = (v.mean - ml) / (mr - ml);
            prob[r] = prob[i] * up;
            prob[l] = prob[i] * (1.0 - up);
        }
    }
    let atoms = tree.frontier(n.min(tree.depth)).into_iter().map(|i| (tree.nodes[i].mean, prob[i])).collect();
    DiscreteMeasure::normalized(atoms).expect("ruin weights form a measure")
}

/// Exact W1 between two discrete measures, `∫ |F_μ − F_ν|`.
pub fn w1_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut xs: Vec<(f64, f64)> = mu.atoms.iter().map(|&(x, w)| (x, w)).collect();
    xs.extend(nu.atoms.iter().map(|&(x, w)| (x, -w)));
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in xs.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// Exact W1 between a discrete measure and Lebesgue measure on `[0, 1]`.
pub fn w1_to_uniform(mu: &DiscreteMeasure) -> f64 {
    // ∫ |F(x) − x| over pieces where F is constant.
    let piece = |c: f64, a: f64, b: f64| -> f64 {
        let g = |x: f64| if x <= c { c * x - x * x / 2.0 } else { c * c - (c * x - x * x / 2.0) };
        if c <= a || c >= b {
            (g(b) - g(a)).abs()
        } else {
            (g(c) - g(a)) + (g(b) - g(c))
        }
    };
    let mut total = 0.0;
    let mut prev = 0.0;
    let mut f = 0.0;
    for &(x, w) in &mu.atoms {
        total += piece(f, prev, x);
        f += w;
        prev = x;
    }
    total + piece(f, prev, 1.0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("tree of depth {0} has no cell structure (point mass or depth 0)")]
    Degenerate(usize),
    #[error("mean {0} is an endpoint of [0, 1]")]
    MeanAtEndpoint(f64),
    #[error("two tree nodes share time {0}")]
    DuplicateTime(f64),
    #[error("u = {0} is not on sigma*")]
    NotOnPath(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// The graph of Theorem prop:skorokhod: tree nodes as vertices, the root
/// dissolved into the point `t*`, leaves joined by `σ*`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub graph: TimeLikeGraph,
    pub t_star: EdgePoint,
    pub sigma_star: TimePath,
    /// Vertex ids of the leaves, by time.
    pub leaves: Vec<VertexId>,
}

/// Builds the embedding graph. Vertex ids are ranks by time. When a leaf
/// sits at 0 or 1, `σ*` is extended to −1 or 2 so the leaf keeps degree 3.
pub fn build_embedding_tlg(tree: &DubinsTree) -> Result<Embedding, EmbeddingError> {
    let root = &tree.nodes[0];
    let Some((rl, rr)) = root.children else {
        return Err(EmbeddingError::Degenerate(tree.depth));
    };
    if root.mean <= 0.0 || root.mean >= 1.0 {
        return Err(EmbeddingError::MeanAtEndpoint(root.mean));
    }
    let leaves: Vec<usize> = tree.frontier(tree.depth);
    let internal: Vec<usize> = (1..tree.nodes.len()).filter(|&i| tree.nodes[i].children.is_some()).collect();

    let mut times: Vec<f64> = leaves.iter().chain(&internal).map(|&i| tree.nodes[i].mean).collect();
    let first = if tree.nodes[leaves[0]].mean <= 0.0 { -1.0 } else { 0.0 };
    let last = if tree.nodes[*leaves.last().unwrap()].mean >= 1.0 { 2.0 } else { 1.0 };
    times.push(first);
    times.push(last);
    times.sort_by(f64::total_cmp);
    if let Some(w) = times.windows(2).find(|w| w[0] == w[1]) {
        return Err(EmbeddingError::DuplicateTime(w[0]));
    }
    let id = |t: f64| times.partition_point(|&s| s < t) as VertexId;
    let node_id = |i: usize| id(tree.nodes[i].mean);

    let mut pairs: Vec<(VertexId, VertexId)> = Vec::new();
    let mut sigma = vec![id(first)];
    sigma.extend(leaves.iter().map(|&i| node_id(i)));
    sigma.push(id(last));
    pairs.extend(sigma.windows(2).map(|w| (w[0], w[1])));
    let edge = |a: VertexId, b: VertexId| if a < b { (a, b) } else { (b, a) };
    for &i in &internal {
        let (l, r) = tree.nodes[i].children.expect("internal");
        pairs.push(edge(node_id(i), node_id(l)));
        pairs.push(edge(node_id(i), node_id(r)));
    }
    let t_star_pair = edge(node_id(rl), node_id(rr));
    pairs.push(t_star_pair);

    let vertices: Vec<(VertexId, f64)> = times.iter().enumerate().map(|(k, &t)| (k as VertexId, t)).collect();
    let mut edges = Vec::with_capacity(pairs.len());
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let slot = pairs[..k].iter().filter(|&&p| p == (a, b)).count() as u8;
        edges.push(crate::graph::Edge::with_slot(a, b, slot));
    }
    let t_slot = edges.last().unwrap().slot;
    let graph = TimeLikeGraph::new(
        vertices.iter().map(|&(id, time)| crate::graph::Vertex { id, time }).collect(),
        edges,
        Mode::Strict,
    )
    .expect("embedding graph is structural");
    let t_edge = graph.find_edge(t_star_pair.0, t_star_pair.1, t_slot).expect("t* edge exists");
    let leaves = leaves.iter().map(|&i| node_id(i)).collect();
    Ok(Embedding {
        graph,
        t_star: EdgePoint { edge: t_edge, time: root.mean },
        sigma_star: TimePath::new(sigma),
        leaves,
    })
}

/// Both sides of Eq. (427) for the Brownian law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMoment {
    pub n: usize,
    pub u: f64,
    /// `E(X(t*) X(u))` from the exact field on the embedding graph.
    pub lhs: f64,
    /// `Σ w_i min(t_i, u)` from the level-K walk weights.
    pub lhs_walk: f64,
    pub rhs: f64,
    pub diff: f64,
}

/// Eq. (427): `E(X(t*) X(u))` against `∫₀ᵘ s dμ + u μ((u, 1])`.
pub fn verify_second_moment(mu: &DiscreteMeasure, n: usize, u: f64) -> Result<SecondMoment, EmbeddingError> {
    let tree = dubins_tree(mu, n);
    let emb = build_embedding_tlg(&tree)?;
    let g = &emb.graph;
    if !(0.0..=1.0).contains(&u) {
        return Err(EmbeddingError::NotOnPath(u));
    }
    let path_edges = emb.sigma_star.edges(g).expect("sigma* is a path of the graph");
    let mut grid = SampleGrid::vertices_only(g);
    grid.insert(emb.t_star.edge, emb.t_star.time).map_err(FieldError::from)?;
    let on_vertex = emb.sigma_star.vertices.iter().find(|&&v| g.time_of(v) == Some(u)).copied();
    let u_edge = match on_vertex {
        Some(_) => None,
        None => {
            let k = *path_edges
                .iter()
                .find(|&&k| {
                    let (a, b) = g.edge_times(k);
                    a < u && u < b
                })
                .ok_or(EmbeddingError::NotOnPath(u))?;
            grid.insert(k, u).map_err(FieldError::from)?;
            Some(k)
        }
    };
    let tower = build_tower(g).map_err(|e| match e {
        crate::tower::TowerError::NotNcc { witness } => FieldError::NotNcc { witness },
        crate::tower::TowerError::Stalled { .. } => FieldError::InvalidTower(Default::default()),
    })?;
    let field = build_field(g, &tower, &grid, Law::PinnedTwoSided { drift: 0.0 })?;
    let star = field.points().point(SamplePoint { edge: emb.t_star.edge, index: 1 }).expect("t* on grid");
    let up = match (on_vertex, u_edge) {
        (Some(v), _) => field.vertex(v).expect("vertex in field"),
        (None, Some(k)) => {
            let index = field.points().grid().index_of(k, u).expect("u inserted");
            field.points().point(SamplePoint { edge: k, index }).expect("u on grid")
        }
        _ => unreachable!(),
    };
    let lhs = field.second_moment(star, up);

    let support = support_check(g, &emb.sigma_star, emb.t_star)?;
    let levels = filtration_levels(g, &support)?;
    let walk = levels.distribution(g, levels.depth())?;
    let lhs_walk: f64 = walk.atoms.iter().map(|a| a.prob * a.time.max(0.0).min(u)).sum();
    let rhs = mu.min_moment(u);
    Ok(SecondMoment { n, u, lhs, lhs_walk, rhs, diff: (lhs - rhs).abs() })
}

impl Embedding {
    pub fn write_graph_json<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(self.graph.to_json().as_bytes())
    }
}

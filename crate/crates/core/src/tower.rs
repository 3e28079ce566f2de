//! Construction towers: a base full path plus path-attachment steps.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cells::{Cell, CellStructure};
use crate::graph::{Edge, EdgeIdx, TimeLikeGraph, VertexId};
use crate::ncc::{is_ncc_with, NccVerdict};
use crate::paths::{find_path, TimePath};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConstructionStep {
    pub path: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<u8>,
    pub attach_low: VertexId,
    pub attach_high: VertexId,
    pub witness: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness_slots: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tower {
    pub base: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base_slots: Vec<u8>,
    pub steps: Vec<ConstructionStep>,
}

impl Tower {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tower serializes")
    }

    /// Short content hash, stable across runs.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn push_step(&mut self, g: &TimeLikeGraph, path: &[EdgeIdx], witness: &[EdgeIdx]) {
        let p = TimePath::from_edges(g, path);
        let w = TimePath::from_edges(g, witness);
        self.steps.push(ConstructionStep {
            attach_low: p.start(),
            attach_high: p.end(),
            path: p.vertices,
            slots: p.slots,
            witness: w.vertices,
            witness_slots: w.slots,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TowerViolation {
    BaseNotFull,
    MissingEdge { from: VertexId, to: VertexId },
    EdgeReused { from: VertexId, to: VertexId },
    PathTooShort,
    AttachMismatch,
    AttachNotPresent { vertex: VertexId },
    AttachNotInterior { vertex: VertexId, degree: usize },
    TimesNotIncreasing,
    InteriorNotNew { vertex: VertexId },
    WitnessInvalid,
    NoWitnessPath,
    UnionMismatch { missing: Vec<Edge> },
}

impl fmt::Display for TowerViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TowerViolation::BaseNotFull => write!(f, "base is not a full time path"),
            TowerViolation::MissingEdge { from, to } => write!(f, "no available edge {from}->{to}"),
            TowerViolation::EdgeReused { from, to } => write!(f, "edge {from}->{to} already built"),
            TowerViolation::PathTooShort => write!(f, "new path has no edge"),
            TowerViolation::AttachMismatch => write!(f, "attachment points differ from path ends"),
            TowerViolation::AttachNotPresent { vertex } => {
                write!(f, "attachment {vertex} is not on the current graph")
            }
            TowerViolation::AttachNotInterior { vertex, degree } => {
                write!(f, "attachment {vertex} has current degree {degree}, not an edge interior point")
            }
            TowerViolation::TimesNotIncreasing => write!(f, "attachLow is not earlier than attachHigh"),
            TowerViolation::InteriorNotNew { vertex } => {
                write!(f, "new-path vertex {vertex} already exists")
            }
            TowerViolation::WitnessInvalid => write!(f, "witness is not a time path through both attachments"),
            TowerViolation::NoWitnessPath => write!(f, "no time path through both attachments exists"),
            TowerViolation::UnionMismatch { missing } => {
                write!(f, "tower does not rebuild the graph; missing {missing:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepViolation {
    /// `None` for the base path and for the final union check.
    pub step: Option<usize>,
    pub violation: TowerViolation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TowerReport {
    pub violations: Vec<StepViolation>,
}

impl TowerReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_failing_step(&self) -> Option<Option<usize>> {
        self.violations.first().map(|v| v.step)
    }
}

/// Represented subgraph state while replaying or building a tower.
struct Built<'g> {
    g: &'g TimeLikeGraph,
    edge: Vec<bool>,
    degree: Vec<usize>,
}

impl<'g> Built<'g> {
    fn new(g: &'g TimeLikeGraph) -> Self {
        Built { g, edge: vec![false; g.edge_count()], degree: vec![0; g.vertex_count()] }
    }

    fn add(&mut self, k: EdgeIdx) {
        self.edge[k] = true;
        self.degree[self.g.tail(k)] += 1;
        self.degree[self.g.head(k)] += 1;
    }

    fn complete(&self) -> bool {
        self.edge.iter().all(|&b| b)
    }

    /// Resolves a hop to an edge; explicit slots are exact, otherwise the
    /// smallest slot whose built-state equals `built` is used.
    fn resolve(&self, from: VertexId, to: VertexId, slot: Option<u8>, built: bool) -> Option<EdgeIdx> {
        match slot {
            Some(s) => self.g.find_edge(from, to, s),
            None => (0..2u8)
                .filter_map(|s| self.g.find_edge(from, to, s))
                .find(|&k| self.edge[k] == built),
        }
    }

    fn resolve_path(&self, ids: &[VertexId], slots: &[u8], built: bool) -> Result<Vec<EdgeIdx>, TowerViolation> {
        ids.windows(2)
            .enumerate()
            .map(|(i, w)| {
                self.resolve(w[0], w[1], slots.get(i).copied(), built)
                    .ok_or(TowerViolation::MissingEdge { from: w[0], to: w[1] })
            })
            .collect()
    }
}

/// Replays a tower against a graph and reports every rule violation.
pub fn verify_tower(g: &TimeLikeGraph, tower: &Tower) -> TowerReport {
    let mut report = TowerReport::default();
    let mut push = |step: Option<usize>, violation| report.violations.push(StepViolation { step, violation });
    let mut built = Built::new(g);

    match built.resolve_path(&tower.base, &tower.base_slots, false) {
        Ok(edges) => {
            let full = !edges.is_empty()
                && g.ix(tower.base[0]) == Some(g.initial())
                && g.ix(*tower.base.last().unwrap()) == Some(g.terminal());
            if !full {
                push(None, TowerViolation::BaseNotFull);
            }
            for k in edges {
                built.add(k);
            }
        }
        Err(v) => {
            push(None, v);
            push(None, TowerViolation::BaseNotFull);
        }
    }

    for (i, step) in tower.steps.iter().enumerate() {
        let at = Some(i);
        if step.path.len() < 2 {
            push(at, TowerViolation::PathTooShort);
            continue;
        }
        if step.path[0] != step.attach_low || *step.path.last().unwrap() != step.attach_high {
            push(at, TowerViolation::AttachMismatch);
        }
        let (lo, hi) = (step.path[0], *step.path.last().unwrap());
        let mut attach_ok = true;
        for v in [lo, hi] {
            match g.ix(v) {
                Some(ix) if built.degree[ix] == 2 => {}
                Some(ix) if built.degree[ix] == 0 => {
                    attach_ok = false;
                    push(at, TowerViolation::AttachNotPresent { vertex: v });
                }
                Some(ix) => {
                    attach_ok = false;
                    push(at, TowerViolation::AttachNotInterior { vertex: v, degree: built.degree[ix] });
                }
                None => {
                    attach_ok = false;
                    push(at, TowerViolation::AttachNotPresent { vertex: v });
                }
            }
        }
        if attach_ok {
            let (a, b) = (g.vx(lo), g.vx(hi));
            if g.time(a) >= g.time(b) {
                push(at, TowerViolation::TimesNotIncreasing);
            } else {
                check_witness(g, &built, step, a, b, &mut |v| push(at, v));
            }
        }
        for &v in &step.path[1..step.path.len() - 1] {
            if g.ix(v).is_some_and(|ix| built.degree[ix] > 0) {
                push(at, TowerViolation::InteriorNotNew { vertex: v });
            }
        }
        for (j, w) in step.path.windows(2).enumerate() {
            let slot = step.slots.get(j).copied();
            match built.resolve(w[0], w[1], slot, false) {
                Some(k) if !built.edge[k] => built.add(k),
                Some(_) => push(at, TowerViolation::EdgeReused { from: w[0], to: w[1] }),
                None => match built.resolve(w[0], w[1], slot, true) {
                    Some(_) => push(at, TowerViolation::EdgeReused { from: w[0], to: w[1] }),
                    None => push(at, TowerViolation::MissingEdge { from: w[0], to: w[1] }),
                },
            }
        }
    }

    if !built.complete() {
        let missing = (0..g.edge_count()).filter(|&k| !built.edge[k]).map(|k| g.edge(k)).collect();
        push(None, TowerViolation::UnionMismatch { missing });
    }
    report
}

fn check_witness(
    g: &TimeLikeGraph,
    built: &Built,
    step: &ConstructionStep,
    a: usize,
    b: usize,
    push: &mut impl FnMut(TowerViolation),
) {
    let exists = find_path(g, a, b, |k| built.edge[k]).is_some();
    if !exists {
        push(TowerViolation::NoWitnessPath);
        return;
    }
    if step.witness.is_empty() {
        return;
    }
    let valid = built.resolve_path(&step.witness, &step.witness_slots, true).is_ok()
        && step.witness.contains(&step.attach_low)
        && step.witness.contains(&step.attach_high);
    if !valid {
        push(TowerViolation::WitnessInvalid);
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TowerError {
    #[error("graph is not NCC")]
    NotNcc { witness: Box<(Cell, Cell)> },
    #[error("greedy construction stalled (vertex {vertex:?}) although no NCC witness exists")]
    Stalled { vertex: Option<VertexId> },
}

/// Greedy tower builder: repeatedly take the latest built interior point with
/// an unbuilt outgoing edge and attach a new path from it to its
/// forward-minimal cell end.
pub fn build_tower(g: &TimeLikeGraph) -> Result<Tower, TowerError> {
    let st = CellStructure::new(g);
    let mut built = Built::new(g);
    let mut base = Vec::new();
    let mut v = g.initial();
    while v != g.terminal() {
        let Some(&k) = g.out_edges(v).first() else {
            return Err(fail(g, &st, None));
        };
        base.push(k);
        v = g.head(k);
    }
    for &k in &base {
        built.add(k);
    }
    let bp = TimePath::from_edges(g, &base);
    let mut tower = Tower { base: bp.vertices, base_slots: bp.slots, steps: Vec::new() };

    while !built.complete() {
        let pick = (0..g.vertex_count())
            .filter(|&x| built.degree[x] == 2 && g.out_edges(x).iter().any(|&k| !built.edge[k]))
            .max_by(|&x, &y| g.time(x).total_cmp(&g.time(y)).then(g.id(y).cmp(&g.id(x))));
        let Some(j1) = pick else {
            return Err(fail(g, &st, None));
        };
        let first = *g.out_edges(j1).iter().find(|&&k| !built.edge[k]).expect("unbuilt edge");
        let targets = &st.forward_ends[j1];
        let Some(path) = attach_path(g, &built, first, |x| targets.contains(&x)) else {
            return Err(fail(g, &st, Some(j1)));
        };
        let end = g.head(*path.last().unwrap());
        if built.degree[end] != 2 {
            return Err(fail(g, &st, Some(j1)));
        }
        let Some(witness) = find_path(g, j1, end, |k| built.edge[k]) else {
            return Err(fail(g, &st, Some(j1)));
        };
        for &k in &path {
            built.add(k);
        }
        tower.push_step(g, &path, &witness);
    }
    Ok(tower)
}

fn fail(g: &TimeLikeGraph, st: &CellStructure, at: Option<usize>) -> TowerError {
    match is_ncc_with(g, st) {
        NccVerdict::NotNcc { witness, .. } => TowerError::NotNcc { witness },
        NccVerdict::Ncc => TowerError::Stalled { vertex: at.map(|x| g.id(x)) },
    }
}

/// Depth-first search for a path starting with edge `first` whose interior
/// avoids built vertices and whose end is the first built vertex reached and
/// satisfies `accept`.
fn attach_path(g: &TimeLikeGraph, built: &Built, first: EdgeIdx, accept: impl Fn(usize) -> bool) -> Option<Vec<EdgeIdx>> {
    let mut out = Vec::new();
    let mut stack = vec![first];
    if search(g, built, &mut stack, &accept, &mut out) {
        Some(out)
    } else {
        None
    }
}

fn search(
    g: &TimeLikeGraph,
    built: &Built,
    stack: &mut Vec<EdgeIdx>,
    accept: &impl Fn(usize) -> bool,
    out: &mut Vec<EdgeIdx>,
) -> bool {
    let v = g.head(*stack.last().unwrap());
    if built.degree[v] > 0 {
        if accept(v) {
            *out = stack.clone();
            return true;
        }
        return false;
    }
    for &k in g.out_edges(v) {
        stack.push(k);
        if search(g, built, stack, accept, out) {
            return true;
        }
        stack.pop();
    }
    false
}

/// Every legal next step from the current state: paths with new interiors
/// joining two built interior points that share a built time path.
fn legal_steps(g: &TimeLikeGraph, built: &Built, limit: usize) -> Vec<(Vec<EdgeIdx>, Vec<EdgeIdx>)> {
    let mut steps = Vec::new();
    for a in 0..g.vertex_count() {
        if built.degree[a] != 2 {
            continue;
        }
        for &k in g.out_edges(a) {
            if built.edge[k] {
                continue;
            }
            let mut paths = Vec::new();
            collect_paths(g, built, &mut vec![k], &mut paths, limit);
            for p in paths {
                let b = g.head(*p.last().unwrap());
                if built.degree[b] != 2 {
                    continue;
                }
                if let Some(w) = find_path(g, a, b, |e| built.edge[e]) {
                    steps.push((p, w));
                }
            }
        }
    }
    steps
}

fn collect_paths(g: &TimeLikeGraph, built: &Built, stack: &mut Vec<EdgeIdx>, out: &mut Vec<Vec<EdgeIdx>>, limit: usize) {
    if out.len() >= limit {
        return;
    }
    let v = g.head(*stack.last().unwrap());
    if built.degree[v] > 0 {
        out.push(stack.clone());
        return;
    }
    for &k in g.out_edges(v) {
        stack.push(k);
        collect_paths(g, built, stack, out, limit);
        stack.pop();
    }
}

/// A tower obtained by a random base path followed by uniformly chosen legal
/// steps, restarting on dead ends. Returns `None` after `attempts` failures.
pub fn random_tower<R: Rng + ?Sized>(g: &TimeLikeGraph, rng: &mut R, attempts: usize) -> Option<Tower> {
    'attempt: for _ in 0..attempts {
        let mut built = Built::new(g);
        let mut base = Vec::new();
        let mut v = g.initial();
        while v != g.terminal() {
            let &k = g.out_edges(v).choose(rng)?;
            base.push(k);
            v = g.head(k);
        }
        for &k in &base {
            built.add(k);
        }
        let bp = TimePath::from_edges(g, &base);
        let mut tower = Tower { base: bp.vertices, base_slots: bp.slots, steps: Vec::new() };
        while !built.complete() {
            let options = legal_steps(g, &built, 64);
            let Some((path, witness)) = options.choose(rng) else {
                continue 'attempt;
            };
            for &k in path {
                built.add(k);
            }
            tower.push_step(g, path, witness);
        }
        return Some(tower);
    }
    None
}

/// Edges in construction order (base first), resolved against `g`.
pub fn replay_edges(g: &TimeLikeGraph, tower: &Tower) -> Result<Vec<EdgeIdx>, TowerViolation> {
    let mut built = Built::new(g);
    let mut order = Vec::new();
    let base = built.resolve_path(&tower.base, &tower.base_slots, false)?;
    for k in base {
        built.add(k);
        order.push(k);
    }
    for step in &tower.steps {
        for (j, w) in step.path.windows(2).enumerate() {
            let k = built
                .resolve(w[0], w[1], step.slots.get(j).copied(), false)
                .filter(|&k| !built.edge[k])
                .ok_or(TowerViolation::MissingEdge { from: w[0], to: w[1] })?;
            built.add(k);
            order.push(k);
        }
    }
    Ok(order)
}

/// Resolved edge lists for the base and each step.
pub fn resolve_segments(g: &TimeLikeGraph, tower: &Tower) -> Result<Vec<Vec<EdgeIdx>>, TowerViolation> {
    let order = replay_edges(g, tower)?;
    let mut segments = Vec::with_capacity(tower.steps.len() + 1);
    let mut rest = &order[..];
    let sizes = std::iter::once(tower.base.len() - 1).chain(tower.steps.iter().map(|s| s.path.len() - 1));
    for n in sizes {
        segments.push(rest[..n].to_vec());
        rest = &rest[n..];
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_tower_for_fig4_verifies() {
        let report = verify_tower(&fixtures::fig4(), &fixtures::fig4_paper_tower());
        assert!(report.passes(), "{report:?}");
    }

    #[test]
    fn built_tower_for_fig4_verifies() {
        let g = fixtures::fig4();
        let t = build_tower(&g).unwrap();
        assert!(verify_tower(&g, &t).passes());
    }

    #[test]
    fn minimal_graph_tower_is_bare_base() {
        let t = build_tower(&fixtures::minimal()).unwrap();
        assert_eq!(t.base, vec![0, 1]);
        assert!(t.steps.is_empty());
    }

    #[test]
    fn fig2_is_refused() {
        assert!(matches!(build_tower(&fixtures::fig2()), Err(TowerError::NotNcc { .. })));
    }

    #[test]
    fn reordered_steps_fail_at_first_bad_step() {
        let mut t = fixtures::fig4_paper_tower();
        t.steps.swap(0, 1);
        let report = verify_tower(&fixtures::fig4(), &t);
        assert_eq!(report.first_failing_step(), Some(Some(0)));
    }

    #[test]
    fn remark_i_illegal_tower_fails() {
        let g = fixtures::fig2_without_34();
        let t = Tower {
            base: vec![0, 1, 2, 4, 6, 7],
            base_slots: vec![],
            steps: vec![
                ConstructionStep {
                    path: vec![1, 3, 5, 6],
                    slots: vec![],
                    attach_low: 1,
                    attach_high: 6,
                    witness: vec![1, 2, 4, 6],
                    witness_slots: vec![],
                },
                ConstructionStep {
                    path: vec![2, 5],
                    slots: vec![],
                    attach_low: 2,
                    attach_high: 5,
                    witness: vec![2, 4, 6],
                    witness_slots: vec![],
                },
            ],
        };
        let report = verify_tower(&g, &t);
        assert!(report
            .violations
            .iter()
            .any(|v| v.step == Some(1) && v.violation == TowerViolation::NoWitnessPath));
        assert!(report.violations.iter().all(|v| v.step == Some(1)));
    }

    #[test]
    fn parallel_edge_tower_uses_other_slot() {
        let g = fixtures::parallel_edge();
        let t = build_tower(&g).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert!(verify_tower(&g, &t).passes());
        let json = t.to_json();
        assert!(verify_tower(&g, &Tower::from_json(&json).unwrap()).passes());
    }

    #[test]
    fn random_towers_verify() {
        let g = fixtures::fig4();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let t = random_tower(&g, &mut rng, 100).expect("tower found");
            assert!(verify_tower(&g, &t).passes(), "{t:?}");
        }
    }

    #[test]
    fn replay_reproduces_edge_multiset() {
        let g = fixtures::fig1();
        let t = build_tower(&g).unwrap();
        let mut edges: Vec<_> = replay_edges(&g, &t).unwrap().into_iter().map(|k| g.edge(k)).collect();
        edges.sort();
        let mut all = g.edges().to_vec();
        all.sort();
        assert_eq!(edges, all);
    }
}

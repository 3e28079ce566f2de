//! Graph families for property tests: exhaustive small strict TLGs, random
//! NCC graphs grown by path attachments, and degree-preserving rewires.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::graph::{Edge, Mode, TimeLikeGraph, Vertex, VertexId};
use crate::validate::validate_tlg;

/// Every strict TLG on vertices `0..n` with times `j/(n-1)` (distinct, in id
/// order), as edge lists. `n` must be even for any to exist.
pub fn enumerate_strict(n: usize) -> Vec<TimeLikeGraph> {
    if n < 2 {
        return Vec::new();
    }
    let internal = n - 2;
    let mut out = Vec::new();
    // Each internal vertex is (in, out) = (1, 2) or (2, 1); totals must balance.
    for mask in 0u32..(1 << internal) {
        if internal > 0 && mask.count_ones() as usize * 2 != internal {
            continue;
        }
        let mut need_out = vec![0u8; n];
        let mut need_in = vec![0u8; n];
        need_out[0] = 1;
        need_in[n - 1] = 1;
        for j in 0..internal {
            let split = mask >> j & 1 == 1;
            need_out[j + 1] = if split { 2 } else { 1 };
            need_in[j + 1] = if split { 1 } else { 2 };
        }
        let mut edges = Vec::new();
        assign(0, n, &need_out, &mut need_in, &mut edges, &mut out);
    }
    out
}

fn assign(
    v: usize,
    n: usize,
    need_out: &[u8],
    need_in: &mut [u8],
    edges: &mut Vec<(usize, usize)>,
    out: &mut Vec<TimeLikeGraph>,
) {
    if v == n {
        if need_in.iter().all(|&x| x == 0) {
            out.push(build(n, edges));
        }
        return;
    }
    // Incoming edges of v come only from earlier vertices, all placed by now.
    if need_in[v] > 0 {
        return;
    }
    choose_targets(v, v + 1, need_out[v], n, need_out, need_in, edges, out);
}

#[allow(clippy::too_many_arguments)]
fn choose_targets(
    v: usize,
    from: usize,
    remaining: u8,
    n: usize,
    need_out: &[u8],
    need_in: &mut [u8],
    edges: &mut Vec<(usize, usize)>,
    out: &mut Vec<TimeLikeGraph>,
) {
    if remaining == 0 {
        assign(v + 1, n, need_out, need_in, edges, out);
        return;
    }
    for w in from..n {
        if need_in[w] == 0 {
            continue;
        }
        need_in[w] -= 1;
        edges.push((v, w));
        // Non-decreasing target order enumerates each multiset once.
        choose_targets(v, w, remaining - 1, n, need_out, need_in, edges, out);
        edges.pop();
        need_in[w] += 1;
    }
}

fn build(n: usize, edges: &[(usize, usize)]) -> TimeLikeGraph {
    let denom = (n - 1) as f64;
    let vertices: Vec<(VertexId, f64)> = (0..n).map(|j| (j as VertexId, j as f64 / denom)).collect();
    let pairs: Vec<(VertexId, VertexId)> = edges.iter().map(|&(a, b)| (a as VertexId, b as VertexId)).collect();
    TimeLikeGraph::from_pairs(&vertices, &pairs, Mode::Strict).expect("enumerated graph is structural")
}

/// Grows an NCC graph on `[0, 1]` by `steps` random attachments: pick a random
/// full time path, subdivide it at two random times and join the two new
/// points by a new edge (a parallel edge when they are adjacent).
pub fn random_ncc_graph<R: Rng + ?Sized>(rng: &mut R, steps: usize) -> TimeLikeGraph {
    let mut times: Vec<f64> = vec![0.0, 1.0];
    let mut edges: Vec<Edge> = vec![Edge::new(0, 1)];
    for _ in 0..steps {
        let path = random_full_path(&edges, rng);
        let mut t1 = rng.random_range(0.0..1.0);
        let mut t2 = rng.random_range(0.0..1.0);
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        if !(t1 > 0.0 && t2 < 1.0 && t2 - t1 > 1e-9) {
            continue;
        }
        let mut path = path;
        let v1 = subdivide(&mut times, &mut edges, &mut path, t1);
        let v2 = subdivide(&mut times, &mut edges, &mut path, t2);
        let slot = if edges.iter().any(|e| e.from == v1 && e.to == v2) { 1 } else { 0 };
        edges.push(Edge::with_slot(v1, v2, slot));
    }
    let vertices = times.iter().enumerate().map(|(i, &t)| Vertex { id: i as VertexId, time: t }).collect();
    TimeLikeGraph::new(vertices, edges, Mode::Strict).expect("grown graph is structural")
}

fn random_full_path<R: Rng + ?Sized>(edges: &[Edge], rng: &mut R) -> Vec<Edge> {
    let mut out_of: HashMap<VertexId, Vec<Edge>> = HashMap::new();
    for e in edges {
        out_of.entry(e.from).or_default().push(*e);
    }
    let terminal = 1;
    let mut v = 0;
    let mut path = Vec::new();
    while v != terminal {
        let e = *out_of[&v].choose(rng).expect("non-terminal vertices have out-edges");
        path.push(e);
        v = e.to;
    }
    path
}

/// Splits the path edge spanning time `t` by a new vertex; returns its id.
fn subdivide(times: &mut Vec<f64>, edges: &mut Vec<Edge>, path: &mut Vec<Edge>, t: f64) -> VertexId {
    let pos = path
        .iter()
        .position(|e| times[e.from as usize] < t && t < times[e.to as usize])
        .expect("time inside the path span");
    let old = path[pos];
    let v = times.len() as VertexId;
    times.push(t);
    edges.retain(|e| *e != old);
    let (a, b) = (Edge::new(old.from, v), Edge::new(v, old.to));
    edges.push(a);
    edges.push(b);
    path.splice(pos..=pos, [a, b]);
    v
}

/// Randomly swaps heads of edge pairs, keeping in/out degrees and edge time
/// direction; only swaps that leave a valid strict TLG are kept.
pub fn rewire<R: Rng + ?Sized>(g: &TimeLikeGraph, rng: &mut R, swaps: usize) -> TimeLikeGraph {
    let mut cur = g.clone();
    for _ in 0..swaps {
        let m = cur.edge_count();
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..m));
        let (e1, e2) = (cur.edge(i), cur.edge(j));
        if i == j || e1.from == e2.from || e1.to == e2.to {
            continue;
        }
        let t = |id| cur.time_of(id).unwrap();
        if !(t(e1.from) < t(e2.to) && t(e2.from) < t(e1.to)) {
            continue;
        }
        let mut pairs: Vec<(VertexId, VertexId)> = cur
            .edges()
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i && k != j)
            .map(|(_, e)| (e.from, e.to))
            .collect();
        pairs.push((e1.from, e2.to));
        pairs.push((e2.from, e1.to));
        let vertices: Vec<(VertexId, f64)> = cur.vertices().iter().map(|v| (v.id, v.time)).collect();
        if let Ok(next) = TimeLikeGraph::from_pairs(&vertices, &pairs, Mode::Strict) {
            if validate_tlg(&next, Mode::Strict).is_valid() {
                cur = next;
            }
        }
    }
    cur
}

//! Acceptance criteria, one test each. Every test prints a single
//! `CRITERION <k>: PASS|FAIL` line with its measurements and timing.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timelike::dubins::{
    build_embedding_tlg, dubins_tree, embedded_measure, verify_second_moment, w1_to_uniform, DiscreteMeasure,
    DEFAULT_ATOMS,
};
use timelike::fixtures;
use timelike::gauss::identities::{fig2_inconsistency, time_markov_defect, tower_invariance};
use timelike::gauss::{build_field, cell_covariance_formula, Law, NaturalSetup, PointAddress, SampleGrid, SamplePoint};
use timelike::generate::{enumerate_strict, random_ncc_graph, rewire};
use timelike::harness::{compare_with_gaussian, filtration_levels, support_check, EdgePoint};
use timelike::honeycomb::{convergence_study, monte_carlo_check, ChainSpec, VerticalScaling};
use timelike::paths::Reach;
use timelike::sampler::Sampler;
use timelike::tower::{random_tower, verify_tower};
use timelike::{build_tower, is_ncc, Cell, TimeLikeGraph, TimePath};

fn report(k: usize, pass: bool, detail: &str, start: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("CRITERION {k}: {verdict} | {detail} | {:.2}s\n", start.elapsed().as_secs_f64());
    // Written to the handle directly so the line shows even when the test
    // harness captures output of passing tests.
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).expect("stdout");
}

#[test]
fn criterion_01_ncc_dual_decider() {
    let start = Instant::now();
    let mut total = 0usize;
    let mut agree = 0usize;
    let mut ncc_count = 0usize;
    let check = |g: &TimeLikeGraph, total: &mut usize, agree: &mut usize, ncc_count: &mut usize| {
        let verdict = is_ncc(g).is_ncc();
        let tower = build_tower(g);
        let tower_ok = match &tower {
            Ok(t) => verify_tower(g, t).passes(),
            Err(_) => false,
        };
        *total += 1;
        *ncc_count += verdict as usize;
        *agree += (verdict == tower_ok) as usize;
    };
    for n in [2, 4, 6, 8] {
        for g in enumerate_strict(n) {
            check(&g, &mut total, &mut agree, &mut ncc_count);
        }
    }
    let exhaustive = total;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut random = 0;
    while random < 500 {
        let steps = rng.random_range(4..10);
        let g = random_ncc_graph(&mut rng, steps);
        let g = if random % 2 == 1 { rewire(&g, &mut rng, 6) } else { g };
        if g.vertex_count() <= 8 {
            continue;
        }
        check(&g, &mut total, &mut agree, &mut ncc_count);
        random += 1;
    }
    let figs = is_ncc(&fixtures::fig1()).is_ncc() && is_ncc(&fixtures::fig4()).is_ncc();
    let verdict = is_ncc(&fixtures::fig2());
    let want = [
        Cell::new(TimePath::new(vec![3, 4, 6]), TimePath::new(vec![3, 5, 6])),
        Cell::new(TimePath::new(vec![2, 5, 6]), TimePath::new(vec![2, 4, 6])),
    ];
    let witness_ok = match verdict.witness() {
        Some((a, b)) => want.iter().any(|w| w.same_paths(a)) && want.iter().any(|w| w.same_paths(b)) && !a.same_paths(b),
        None => false,
    };
    let secs = start.elapsed().as_secs_f64();
    let pass = agree == total && figs && witness_ok && secs < 60.0;
    report(
        1,
        pass,
        &format!(
            "{agree}/{total} agree ({exhaustive} exhaustive n<=8, 500 random, {ncc_count} NCC); figs 1/4 NCC {figs}; fig 2 witness {witness_ok}"
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_02_cell_covariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut max_exact, mut worst_z) = (0.0f64, 0.0f64);
    let mut mc_ok = 0;
    for i in 0..50 {
        let tj: f64 = rng.random_range(0.1..1.0);
        let tn = tj + rng.random_range(0.2..1.0);
        let tk = rng.random_range(tj + 0.01..tn - 0.01);
        let tm = rng.random_range(tj + 0.01..tn - 0.01);
        let g = fixtures::single_cell(0.0, tj, tn, tn + 0.5);
        let (ka, kb) = (g.find_edge(1, 2, 0).unwrap(), g.find_edge(1, 2, 1).unwrap());
        let mut grid = SampleGrid::vertices_only(&g);
        grid.insert(ka, tk).unwrap();
        grid.insert(kb, tm).unwrap();
        let law = Law::Wiener { drift: 0.0 };
        let tower = build_tower(&g).unwrap();
        let f = build_field(&g, &tower, &grid, law).unwrap();
        let a = f.points().point(SamplePoint { edge: ka, index: 1 }).unwrap();
        let b = f.points().point(SamplePoint { edge: kb, index: 1 }).unwrap();
        let want = cell_covariance_formula(tj, tk, tm, tn).unwrap();
        max_exact = max_exact.max((f.covariance(a, b) - want).abs());
        let est = Sampler::new(&g, &tower, &grid, law).unwrap().mc_covariance(a, b, 200_000, 1000 + i).unwrap();
        worst_z = worst_z.max((est.estimate - want).abs() / est.stderr);
        mc_ok += est.agrees(want, 4.0) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = max_exact <= 1e-12 && mc_ok == 50 && secs < 30.0;
    report(2, pass, &format!("max |exact - formula| = {max_exact:.2e}; MC within 4 se {mc_ok}/50 (worst {worst_z:.2} se)"), start);
    assert!(pass);
}

/// Up to `want` verified towers with distinct hashes.
fn distinct_towers(g: &TimeLikeGraph, rng: &mut ChaCha8Rng, want: usize) -> Vec<timelike::Tower> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..400 {
        if out.len() == want {
            break;
        }
        if let Some(t) = random_tower(g, rng, 50) {
            if verify_tower(g, &t).passes() && seen.insert(t.hash()) {
                out.push(t);
            }
        }
    }
    out
}

#[test]
fn criterion_03_tower_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut graphs = vec![("fig1".to_string(), fixtures::fig1()), ("fig4".to_string(), fixtures::fig4())];
    while graphs.len() < 22 {
        let steps = rng.random_range(5..9);
        let g = random_ncc_graph(&mut rng, steps);
        graphs.push((format!("random{}", graphs.len() - 2), g));
    }
    let mut worst = 0.0f64;
    let mut short = Vec::new();
    for (name, g) in &graphs {
        let towers = distinct_towers(g, &mut rng, 5);
        if towers.len() < 5 {
            short.push(format!("{name}:{}", towers.len()));
        }
        let grid = SampleGrid::with_mesh(g, 0.05).unwrap();
        let r = tower_invariance(g, &towers, &grid, Law::Wiener { drift: 0.3 }, 1e-10).unwrap();
        worst = worst.max(r.max_diff);
    }
    let pass = worst <= 1e-10 && short.is_empty();
    report(3, pass, &format!("22 graphs x 5 distinct towers, max covariance diff {worst:.2e}; short: {short:?}"), start);
    assert!(pass);
}

#[test]
fn criterion_04_fig2_inconsistency() {
    let start = Instant::now();
    let (a, b) = fig2_inconsistency();
    let pass = (a - 11.0 / 21.0).abs() <= 1e-15 && (b - 0.5).abs() <= 1e-15 && ((a - b) - 1.0 / 42.0).abs() <= 1e-15;
    report(4, pass, &format!("cell values {a:.17} and {b:.17}, difference {:.17}", a - b), start);
    assert!(pass);
}

#[test]
fn criterion_05_remark_iii() {
    let start = Instant::now();
    let cov = |g: &TimeLikeGraph| {
        let s = NaturalSetup::new(g, None).unwrap();
        let f = s.field(Law::Wiener { drift: 0.0 }).unwrap();
        let p = s.resolve(&f, &PointAddress::Vertex(2)).unwrap();
        let q = s.resolve(&f, &PointAddress::Vertex(4)).unwrap();
        f.covariance(p, q)
    };
    let full = fixtures::fig4();
    let times_ok = full.vertices().iter().all(|v| (v.time - v.id as f64 / 11.0).abs() < 1e-15);
    let (g2, g1) = (cov(&full), cov(&fixtures::fig4_without_3()));
    let pass = times_ok && (g2 - g1).abs() > 1e-6;
    report(5, pass, &format!("cov(t2,t4): G2 {g2:.12}, G1 {g1:.12}, diff {:.3e}", g2 - g1), start);
    assert!(pass);
}

struct TreeFixture {
    name: String,
    graph: TimeLikeGraph,
    sigma: TimePath,
    t_star: EdgePoint,
}

fn tree_fixtures() -> Vec<TreeFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut out = Vec::new();
    for i in 0..6 {
        let tj: f64 = rng.random_range(0.0..1.0);
        let tn = tj + rng.random_range(0.3..1.5);
        let g = fixtures::single_cell(tj - 1.0, tj, tn, tn + 1.0);
        let edge = g.find_edge(1, 2, i % 2).unwrap();
        let time = rng.random_range(tj + 0.05..tn - 0.05);
        let sigma = TimePath::with_slots(vec![0, 1, 2, 3], vec![0, 1 - (i % 2) as u8, 0]);
        out.push(TreeFixture { name: format!("cell{i}"), graph: g, sigma, t_star: EdgePoint { edge, time } });
    }
    let mut depth = 2;
    while out.len() < 20 {
        let atoms: Vec<(f64, f64)> = (0..16).map(|_| (rng.random_range(0.02..0.98), rng.random_range(0.5..1.5))).collect();
        let mu = DiscreteMeasure::normalized(atoms).unwrap();
        let tree = dubins_tree(&mu, depth);
        let Ok(emb) = build_embedding_tlg(&tree) else { continue };
        out.push(TreeFixture {
            name: format!("dubins{}_{}", depth, out.len()),
            graph: emb.graph,
            sigma: emb.sigma_star,
            t_star: emb.t_star,
        });
        depth = if depth == 2 { 3 } else { 2 };
    }
    out
}

#[test]
fn criterion_06_harness_martingale() {
    let start = Instant::now();
    let fixtures = tree_fixtures();
    let (mut worst_w, mut worst_t) = (0.0f64, 0.0f64);
    let mut levels_checked = 0;
    let mut failures = Vec::new();
    for fx in &fixtures {
        let support = support_check(&fx.graph, &fx.sigma, fx.t_star).unwrap();
        let levels = filtration_levels(&fx.graph, &support).unwrap();
        for m in 1..=levels.depth() {
            let cmp = compare_with_gaussian(&fx.graph, &levels, m, Law::Wiener { drift: 0.0 }).unwrap();
            let mean = levels.distribution(&fx.graph, m).unwrap().mean_time();
            let dt = (mean - fx.t_star.time).abs();
            worst_w = worst_w.max(cmp.max_diff);
            worst_t = worst_t.max(dt);
            levels_checked += 1;
            if cmp.max_diff > 1e-9 || dt > 1e-12 {
                failures.push(format!("{}@{m}", fx.name));
            }
        }
    }
    let pass = fixtures.len() == 20 && failures.is_empty();
    report(
        6,
        pass,
        &format!(
            "{} fixtures, {levels_checked} levels; max weight diff {worst_w:.2e}; max mean-time diff {worst_t:.2e}; failures {failures:?}",
            fixtures.len()
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_07_dubins() {
    let start = Instant::now();
    let uniform = DiscreteMeasure::uniform(DEFAULT_ATOMS);
    let tree = dubins_tree(&uniform, 8);
    let h1 = tree.level(1);
    let h2 = tree.level(2);
    let levels_ok = h1 == vec![0.25, 0.75] && h2 == vec![0.125, 0.375, 0.625, 0.875];
    let mut pattern = Vec::new();
    let mut pattern_ok = true;
    for n in 0..=6 {
        let w = w1_to_uniform(&embedded_measure(&tree, n));
        pattern_ok &= (w - 2f64.powi(-(n as i32) - 2)).abs() <= 1e-12;
        pattern.push(w);
    }
    let w7 = w1_to_uniform(&embedded_measure(&tree, 7));
    let sm = verify_second_moment(&uniform, 8, 0.5).unwrap();
    let eq427 = (sm.lhs - 0.375).abs();
    let secs = start.elapsed().as_secs_f64();
    let pass = levels_ok && pattern_ok && w7 <= 0.01 && eq427 <= 0.01 && secs < 30.0;
    report(
        7,
        pass,
        &format!(
            "H1 {h1:?}, H2 {h2:?}; W1 N=0..6 {pattern:?} (N=2: {}); W1 N=7 {w7:.3e}; Eq.427 lhs {:.15} (walk {:.15}) vs 3/8, diff {eq427:.2e}",
            pattern[2], sm.lhs, sm.lhs_walk
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_08_honeycomb_constants() {
    let start = Instant::now();
    let c = ChainSpec::paper();
    let pi = c.stationary();
    let r = Rational64::new;
    let pi_ok = pi == [r(1, 8), r(3, 8), r(3, 8), r(1, 8)] && c == ChainSpec::from_lattice();
    let var = c.second_moment();
    let var_ok = var == r(5, 32);
    let mean_ok = c.mean() == r(0, 1);
    let pass = pi_ok && var_ok && mean_ok;
    report(
        8,
        pass,
        &format!(
            "stationary {:?} ok {pi_ok}; E C^2 = {var} rho^2 (required 5/32) ok {var_ok}; mean {} ok {mean_ok}",
            pi.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            c.mean()
        ),
        start,
    );
    assert!(pass, "E C^2 of the stated chain is {var} rho^2, not 5/32 rho^2");
}

#[test]
fn criterion_09_honeycomb_end_to_end() {
    let start = Instant::now();
    let (u, v) = (0.5, 0.5);
    let mc = monte_carlo_check(0.25, u, v, 0.05, VerticalScaling::Statement, 50_000, 909).unwrap();
    let mc_ok = mc.agrees(4.0) && (mc.engine - mc.dp).abs() <= 1e-12;
    let x = 1.0;
    let coarse = convergence_study(u, v, x, &[0.4, 0.2, 0.1], VerticalScaling::Statement).unwrap();
    let cauchy_ok = coarse.cauchy_decreasing();
    let rho_min = [0.4, 0.2, 0.1, 0.05, 0.025];
    let st = convergence_study(u, v, x, &rho_min, VerticalScaling::Statement).unwrap();
    let pr = convergence_study(u, v, x, &rho_min, VerticalScaling::Proof).unwrap();
    let (st_err, pr_err) = (st.last().unwrap().rel_err, pr.last().unwrap().rel_err);
    let within = st_err <= 0.10 || pr_err <= 0.10;
    let offset_reported = st.fitted_factor.is_some() && pr.fitted_factor.is_some();
    let secs = start.elapsed().as_secs_f64();
    let pass = mc_ok && cauchy_ok && within && offset_reported && secs < 300.0;
    report(
        9,
        pass,
        &format!(
            "MC {:.5} +- {:.5} vs DP {:.6} (engine {:.6}, {} vertices); Cauchy diffs {:?} decreasing {cauchy_ok}; \
             rho={} rel err statement {:.3} (fitted x-factor {:.3}), proof {:.3} (fitted x-factor {:.3})",
            mc.estimate.estimate,
            mc.estimate.stderr,
            mc.dp,
            mc.engine,
            mc.window_vertices,
            coarse.rows.iter().filter_map(|r| r.cauchy_diff).map(|d| format!("{d:.4e}")).collect::<Vec<_>>(),
            rho_min[rho_min.len() - 1],
            st_err,
            st.fitted_factor.unwrap_or(f64::NAN),
            pr_err,
            pr.fitted_factor.unwrap_or(f64::NAN),
        ),
        start,
    );
    assert!(pass);
}

#[test]
fn criterion_10_time_markov() {
    let start = Instant::now();
    let mut graphs: Vec<(String, TimeLikeGraph)> = fixtures::planar().into_iter().map(|(n, g)| (n.to_string(), g)).collect();
    graphs.push(("fig1".into(), fixtures::fig1()));
    graphs.push(("fig4".into(), fixtures::fig4()));
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (_, g) in &graphs {
        let tower = build_tower(g).unwrap();
        let grid = SampleGrid::with_mesh(g, 0.1).unwrap();
        for law in [Law::Wiener { drift: 0.0 }, Law::PinnedTwoSided { drift: 0.0 }] {
            let f = build_field(g, &tower, &grid, law).unwrap();
            let reach = Reach::new(g);
            for v in g.vertices() {
                let p = f.vertex(v.id).unwrap();
                if f.variance(p) <= 0.0 {
                    continue;
                }
                worst = worst.max(time_markov_defect(&f, &reach, p).unwrap());
                checked += 1;
            }
        }
    }
    let pass = worst <= 1e-10;
    report(10, pass, &format!("{} fixtures, {checked} vertex checks, max defect {worst:.2e}", graphs.len()), start);
    assert!(pass);
}

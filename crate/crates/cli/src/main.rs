//! `tlg`: command-line front end for the timelike library.
//!
//! Exit codes: 0 success, 1 graph is not NCC, 2 invalid input or failed
//! check, 3 parse or I/O error, 4 usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use timelike::dubins::{
    build_embedding_tlg, dubins_tree, embedded_measure, verify_second_moment, w1_distance, w1_to_uniform,
    DiscreteMeasure, DEFAULT_ATOMS,
};
use timelike::gauss::{cell_formula_values, Law, NaturalSetup, PointAddress};
use timelike::harness::{walk_distribution, EdgePoint};
use timelike::honeycomb::{convergence_study, monte_carlo_check, ChainSpec, VerticalScaling};
use timelike::sampler::Sampler;
use timelike::{build_tower, collapse, is_ncc, validate_tlg, GraphFile, Mode, NccVerdict, TimeLikeGraph, TimePath};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    NotNcc(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::NotNcc(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Usage(_) => 4,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "tlg", about = "Time-like graphs and natural Brownian motion", disable_version_flag = true)]
struct Cli {
    /// Print the version and tool hash.
    #[arg(short = 'V', long = "version", global = true)]
    version: bool,
    /// Record an experiment manifest at this path.
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a graph, decide NCC and build a construction tower.
    Check { graph: PathBuf },
    /// Covariance of two points: exact engine value and/or Monte Carlo.
    Cov(CovArgs),
    /// Harness walk absorption weights at level m as CSV.
    Harness(HarnessArgs),
    /// Dubins tree, embedded measure, embedding graph and Eq. (427) check.
    Dubins(DubinsArgs),
    /// Honeycomb convergence table and chain constants.
    Honeycomb(HoneycombArgs),
    /// Re-run a manifest and compare its outputs.
    Replay {
        #[arg(value_name = "MANIFEST")]
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
struct CovArgs {
    graph: PathBuf,
    /// `v:<id>` or `e:<from>-<to>[:slot]@<time>`.
    a: String,
    b: String,
    /// Exact engine value (default when --mc is absent).
    #[arg(long)]
    exact: bool,
    /// Monte Carlo sample count.
    #[arg(long, value_name = "N")]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid mesh; without it only vertices and the queried points are used.
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long, value_enum, default_value_t = LawArg::Wiener)]
    law: LawArg,
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LawArg {
    Wiener,
    Pinned,
}

impl LawArg {
    fn law(self, drift: f64) -> Law {
        match self {
            LawArg::Wiener => Law::Wiener { drift },
            LawArg::Pinned => Law::PinnedTwoSided { drift },
        }
    }
}

#[derive(Args, Debug)]
struct HarnessArgs {
    graph: PathBuf,
    /// Vertex ids of sigma*, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sigma: Vec<u32>,
    /// Slots of sigma*'s edges, comma separated (default all 0).
    #[arg(long, value_delimiter = ',')]
    slots: Vec<u8>,
    /// Point t* as `<from>-<to>[:slot]@<time>`.
    #[arg(long = "t-star")]
    t_star: String,
    /// Level m (default: the last level).
    #[arg(long)]
    level: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DubinsArgs {
    /// Measure JSON file, or `uniform[:K]`.
    measure: String,
    /// Depth N.
    n: usize,
    /// Write the embedding graph JSON here.
    #[arg(long = "embed-tlg")]
    embed_tlg: Option<PathBuf>,
    /// Write the tree as nested JSON here.
    #[arg(long = "tree-json")]
    tree_json: Option<PathBuf>,
    /// Check Eq. (427) at this u.
    #[arg(long = "verify-427")]
    verify_427: Option<f64>,
    /// Tolerance for --verify-427.
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
}

#[derive(Args, Debug)]
struct HoneycombArgs {
    u: Option<f64>,
    v: Option<f64>,
    x: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1")]
    rhos: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ScalingArg::Statement)]
    scaling: ScalingArg,
    /// Print the step chain's stationary law and moments.
    #[arg(long)]
    chain: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo cross-check on the descent window with this many samples.
    #[arg(long, value_name = "N")]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cell diameter for --mc.
    #[arg(long = "mc-rho", default_value_t = 0.25)]
    mc_rho: f64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ScalingArg {
    Statement,
    Proof,
}

impl From<ScalingArg> for VerticalScaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::Statement => VerticalScaling::Statement,
            ScalingArg::Proof => VerticalScaling::Proof,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FileDigest {
    path: PathBuf,
    sha256: String,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExperimentManifest {
    command: String,
    args: Vec<String>,
    inputs: Vec<FileDigest>,
    seed: Option<u64>,
    mesh: Option<f64>,
    tolerances: Vec<(String, f64)>,
    outputs: Vec<FileDigest>,
    stdout_sha256: String,
    exit_code: u8,
    tool_hash: String,
}

/// Collects inputs, outputs and parameters while a command runs.
#[derive(Default)]
struct Record {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    mesh: Option<f64>,
    tolerances: Vec<(String, f64)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn tool_hash() -> String {
    let bytes = std::env::current_exe().and_then(fs::read).unwrap_or_default();
    sha256_hex(&bytes)
}

fn version_string() -> String {
    format!("tlg {} (sha256:{})", env!("CARGO_PKG_VERSION"), tool_hash())
}

fn digest(path: &Path) -> CliResult<FileDigest> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
}

fn read_text(path: &Path, rec: &mut Record) -> CliResult<String> {
    rec.inputs.push(path.to_path_buf());
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8], rec: &mut Record) -> CliResult<()> {
    rec.outputs.push(path.to_path_buf());
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io_err(e: io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Loads a graph; malformed JSON is a parse error, structural problems make it invalid.
fn load_graph(path: &Path, rec: &mut Record) -> CliResult<TimeLikeGraph> {
    let text = read_text(path, rec)?;
    let file: GraphFile =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: malformed graph JSON: {e}", path.display())))?;
    TimeLikeGraph::from_file(&file).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        CliError::Invalid(format!("{}: {}", path.display(), msgs.join("; ")))
    })
}

/// Validates in the file's own mode and returns the strict graph.
fn strict_graph(g: &TimeLikeGraph) -> CliResult<TimeLikeGraph> {
    let report = validate_tlg(g, g.mode());
    if !report.is_valid() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Invalid(format!("invalid graph: {}", msgs.join("; "))));
    }
    Ok(match g.mode() {
        Mode::Strict => g.clone(),
        Mode::Relaxed => collapse(g).graph,
    })
}

fn cmd_check(path: &Path, out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    let g = load_graph(path, rec)?;
    let report = validate_tlg(&g, g.mode());
    if !report.is_valid() {
        writeln!(out, "invalid").map_err(io_err)?;
        for v in &report.violations {
            writeln!(out, "  {v}").map_err(io_err)?;
        }
        return Err(CliError::Invalid(format!("{}: {} violation(s)", path.display(), report.violations.len())));
    }
    let strict = strict_graph(&g)?;
    writeln!(out, "valid: {} vertices, {} edges", strict.vertex_count(), strict.edge_count()).map_err(io_err)?;
    match is_ncc(&strict) {
        NccVerdict::Ncc => {
            let tower = build_tower(&strict).map_err(|e| CliError::Invalid(format!("tower construction failed: {e}")))?;
            writeln!(out, "ncc: true").map_err(io_err)?;
            writeln!(out, "tower: {} steps, hash {}", tower.steps.len(), tower.hash()).map_err(io_err)?;
            Ok(())
        }
        verdict @ NccVerdict::NotNcc { .. } => {
            writeln!(out, "ncc: false").map_err(io_err)?;
            let json = serde_json::to_string_pretty(&verdict).expect("verdict serializes");
            writeln!(out, "{json}").map_err(io_err)?;
            Err(CliError::NotNcc("graph is not NCC".into()))
        }
    }
}

fn parse_address(s: &str) -> CliResult<PointAddress> {
    s.parse().map_err(|e| CliError::Usage(format!("{e}")))
}

fn cmd_cov(args: &CovArgs, out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    let a = parse_address(&args.a)?;
    let b = parse_address(&args.b)?;
    if args.mc.is_some() && args.seed.is_none() {
        return Err(CliError::Usage("--mc requires --seed".into()));
    }
    if args.mc.is_none() && args.seed.is_some() {
        return Err(CliError::Usage("--seed is only meaningful with --mc".into()));
    }
    rec.seed = args.seed;
    rec.mesh = args.mesh;
    let g = load_graph(&args.graph, rec)?;
    let strict = strict_graph(&g)?;
    let law = args.law.law(args.drift);
    if let NccVerdict::NotNcc { .. } = is_ncc(&strict) {
        if args.mc.is_some() {
            return Err(CliError::NotNcc("Monte Carlo needs an NCC graph".into()));
        }
        return cell_formula_mode(&g, a, b, out);
    }
    let mut setup = NaturalSetup::new(&g, args.mesh).map_err(|e| CliError::Invalid(e.to_string()))?;
    setup.insert(&a).map_err(|e| CliError::Usage(e.to_string()))?;
    setup.insert(&b).map_err(|e| CliError::Usage(e.to_string()))?;
    let field = setup.field(law).map_err(|e| CliError::Invalid(e.to_string()))?;
    let pa = setup.resolve(&field, &a).map_err(|e| CliError::Usage(e.to_string()))?;
    let pb = setup.resolve(&field, &b).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.exact || args.mc.is_none() {
        writeln!(out, "exact {:.17}", field.covariance(pa, pb)).map_err(io_err)?;
    }
    if let (Some(n), Some(seed)) = (args.mc, args.seed) {
        let sampler = Sampler::new(&setup.graph, &setup.tower, &setup.grid, law).map_err(|e| CliError::Invalid(e.to_string()))?;
        let est = sampler.mc_covariance(pa, pb, n, seed).map_err(|e| CliError::Usage(e.to_string()))?;
        writeln!(out, "mc {:.17} stderr {:.17} n {} seed {} tower {}", est.estimate, est.stderr, n, seed, sampler.tower_hash())
            .map_err(io_err)?;
    }
    Ok(())
}

/// Non-NCC input: the natural field does not exist; report every
/// cell-formula value for the pair and flag disagreement.
fn cell_formula_mode(g: &TimeLikeGraph, a: PointAddress, b: PointAddress, out: &mut dyn Write) -> CliResult<()> {
    let (PointAddress::Vertex(va), PointAddress::Vertex(vb)) = (a, b) else {
        return Err(CliError::NotNcc("graph is not NCC; cell-formula mode needs vertex addresses".into()));
    };
    let strict = strict_graph(g)?;
    let values = cell_formula_values(&strict, va, vb).map_err(|e| CliError::Invalid(e.to_string()))?;
    writeln!(out, "not NCC: cell-formula mode").map_err(io_err)?;
    for v in &values {
        writeln!(out, "cell {}->{} {:.17}", v.start, v.end, v.value).map_err(io_err)?;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.value), hi.max(v.value)));
    if values.len() > 1 && hi - lo > 1e-12 {
        writeln!(out, "INCONSISTENT difference {:.17}", hi - lo).map_err(io_err)?;
    } else if values.is_empty() {
        writeln!(out, "no simple cell has these points on opposite branches").map_err(io_err)?;
    }
    Err(CliError::NotNcc("graph is not NCC".into()))
}

fn cmd_harness(args: &HarnessArgs, out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    let g = load_graph(&args.graph, rec)?;
    let sigma = TimePath::with_slots(args.sigma.clone(), args.slots.clone());
    let spec = args.t_star.strip_prefix("e:").unwrap_or(&args.t_star);
    let PointAddress::OnEdge { from, to, slot, time } = parse_address(&format!("e:{spec}"))? else {
        unreachable!("e: prefix parses to an edge address")
    };
    let edge = g.find_edge(from, to, slot).ok_or_else(|| CliError::Usage(format!("no edge {from}->{to} slot {slot}")))?;
    let point = EdgePoint { edge, time };
    let level = match args.level {
        Some(m) => m,
        None => {
            let support = timelike::harness::support_check(&g, &sigma, point).map_err(|e| CliError::Invalid(e.to_string()))?;
            timelike::harness::filtration_levels(&g, &support).map_err(|e| CliError::Invalid(e.to_string()))?.depth()
        }
    };
    let dist = walk_distribution(&g, &sigma, point, level).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut buf = Vec::new();
    dist.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    match &args.out {
        Some(p) => write_file(p, &buf, rec)?,
        None => out.write_all(&buf).map_err(io_err)?,
    }
    Ok(())
}

fn load_measure(spec: &str, rec: &mut Record) -> CliResult<DiscreteMeasure> {
    if let Some(rest) = spec.strip_prefix("uniform") {
        let k = match rest.strip_prefix(':') {
            Some(k) => k.parse().map_err(|_| CliError::Usage(format!("bad atom count in {spec:?}")))?,
            None if rest.is_empty() => DEFAULT_ATOMS,
            None => return Err(CliError::Usage(format!("unknown measure {spec:?}"))),
        };
        if k == 0 {
            return Err(CliError::Usage("uniform needs at least one atom".into()));
        }
        return Ok(DiscreteMeasure::uniform(k));
    }
    let text = read_text(Path::new(spec), rec)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{spec}: malformed JSON: {e}")))?;
    serde_json::from_value(value).map_err(|e| CliError::Invalid(format!("{spec}: {e}")))
}

fn cmd_dubins(args: &DubinsArgs, out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    let mu = load_measure(&args.measure, rec)?;
    let tree = dubins_tree(&mu, args.n);
    for (n, level) in tree.levels().iter().enumerate() {
        let xs: Vec<String> = level.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "H{n} {}", xs.join(",")).map_err(io_err)?;
    }
    let nu = embedded_measure(&tree, args.n);
    let pairs: Vec<String> = nu.atoms().iter().map(|(x, w)| format!("{x}:{w}")).collect();
    writeln!(out, "mu_{} {}", args.n, pairs.join(",")).map_err(io_err)?;
    writeln!(out, "w1_to_input {:.17}", w1_distance(&nu, &mu)).map_err(io_err)?;
    if args.measure.starts_with("uniform") {
        writeln!(out, "w1_to_uniform {:.17}", w1_to_uniform(&nu)).map_err(io_err)?;
    }
    if let Some(p) = &args.tree_json {
        let json = serde_json::to_string_pretty(&tree.to_nested_json()).expect("tree json");
        write_file(p, json.as_bytes(), rec)?;
    }
    if let Some(p) = &args.embed_tlg {
        let emb = build_embedding_tlg(&tree).map_err(|e| CliError::Invalid(e.to_string()))?;
        let mut buf = Vec::new();
        emb.write_graph_json(&mut buf).map_err(io_err)?;
        write_file(p, &buf, rec)?;
        let sigma: Vec<String> = emb.sigma_star.vertices.iter().map(|v| v.to_string()).collect();
        writeln!(out, "embedding sigma* {} t* edge {} time {}", sigma.join(","), emb.t_star.edge, emb.t_star.time)
            .map_err(io_err)?;
    }
    if let Some(u) = args.verify_427 {
        rec.tolerances.push(("verify_427".into(), args.tol));
        let sm = verify_second_moment(&mu, args.n, u).map_err(|e| CliError::Invalid(e.to_string()))?;
        writeln!(out, "eq427 u {} lhs {:.17} lhs_walk {:.17} rhs {:.17} diff {:.3e}", u, sm.lhs, sm.lhs_walk, sm.rhs, sm.diff)
            .map_err(io_err)?;
        if sm.diff > args.tol {
            return Err(CliError::Invalid(format!("Eq. (427) difference {} exceeds {}", sm.diff, args.tol)));
        }
    }
    Ok(())
}

fn cmd_honeycomb(args: &HoneycombArgs, out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    if args.chain {
        let c = ChainSpec::paper();
        let pi: Vec<String> = c.stationary().iter().map(|p| p.to_string()).collect();
        writeln!(out, "stationary {}", pi.join(",")).map_err(io_err)?;
        writeln!(out, "mean {} rho", c.mean()).map_err(io_err)?;
        writeln!(out, "step_variance {} rho^2", c.second_moment()).map_err(io_err)?;
    }
    let (u, v, x) = match (args.u, args.v, args.x) {
        (Some(u), Some(v), Some(x)) => (u, v, x),
        (None, None, None) if args.chain => return Ok(()),
        _ => return Err(CliError::Usage("honeycomb needs u, v and x".into())),
    };
    let scaling = VerticalScaling::from(args.scaling);
    let table = convergence_study(u, v, x, &args.rhos, scaling).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    match &args.out {
        Some(p) => write_file(p, &buf, rec)?,
        None => out.write_all(&buf).map_err(io_err)?,
    }
    let fit = table.fitted_factor.map(|c| format!("{c:.6}")).unwrap_or_else(|| "none".into());
    eprintln!("scaling {scaling:?}: cauchy differences decreasing = {}, fitted factor = {fit}", table.cauchy_decreasing());
    if let Some(n) = args.mc {
        let seed = args.seed.ok_or_else(|| CliError::Usage("--mc requires --seed".into()))?;
        rec.seed = Some(seed);
        let c = monte_carlo_check(args.mc_rho, u, v, x, scaling, n, seed).map_err(|e| CliError::Invalid(e.to_string()))?;
        writeln!(
            out,
            "mc rho {} dp {:.17} engine {:.17} estimate {:.17} stderr {:.17} n {} seed {}",
            c.rho, c.dp, c.engine, c.estimate.estimate, c.estimate.stderr, n, seed
        )
        .map_err(io_err)?;
    } else if args.seed.is_some() {
        return Err(CliError::Usage("--seed is only meaningful with --mc".into()));
    }
    Ok(())
}

fn cmd_replay(path: &Path, out: &mut dyn Write) -> CliResult<()> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let m: ExperimentManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: malformed manifest: {e}", path.display())))?;
    let mut problems = Vec::new();
    for input in &m.inputs {
        if digest(&input.path)?.sha256 != input.sha256 {
            problems.push(format!("input {} changed", input.path.display()));
        }
    }
    let tool = tool_hash();
    if tool != m.tool_hash {
        writeln!(out, "note: tool hash differs from the recorded one").map_err(io_err)?;
    }
    let mut argv = vec!["tlg".to_string()];
    argv.extend(m.args.iter().cloned());
    let mut buf = Vec::new();
    let mut rec = Record::default();
    let code = match dispatch(&argv, &mut buf, &mut rec) {
        Ok(()) => 0,
        Err(e) => e.code(),
    };
    if code != m.exit_code {
        problems.push(format!("exit code {code}, recorded {}", m.exit_code));
    }
    if sha256_hex(&buf) != m.stdout_sha256 {
        problems.push("stdout differs".into());
    }
    for o in &m.outputs {
        if digest(&o.path)?.sha256 != o.sha256 {
            problems.push(format!("output {} differs", o.path.display()));
        }
    }
    if problems.is_empty() {
        writeln!(out, "replay ok: {} ({} output file(s))", m.command, m.outputs.len()).map_err(io_err)?;
        Ok(())
    } else {
        for p in &problems {
            writeln!(out, "mismatch: {p}").map_err(io_err)?;
        }
        Err(CliError::Invalid(format!("replay of {} did not reproduce", path.display())))
    }
}

fn parse(argv: &[String]) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Check { .. } => "check",
        Command::Cov(_) => "cov",
        Command::Harness(_) => "harness",
        Command::Dubins(_) => "dubins",
        Command::Honeycomb(_) => "honeycomb",
        Command::Replay { .. } => "replay",
    }
}

/// Runs one command line (without manifest handling) into `out`.
fn dispatch(argv: &[String], out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    let cli = parse(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run_command(&cli, out, rec)
}

fn run_command(cli: &Cli, out: &mut dyn Write, rec: &mut Record) -> CliResult<()> {
    match &cli.command {
        Some(Command::Check { graph }) => cmd_check(graph, out, rec),
        Some(Command::Cov(a)) => cmd_cov(a, out, rec),
        Some(Command::Harness(a)) => cmd_harness(a, out, rec),
        Some(Command::Dubins(a)) => cmd_dubins(a, out, rec),
        Some(Command::Honeycomb(a)) => cmd_honeycomb(a, out, rec),
        Some(Command::Replay { file }) => cmd_replay(file, out),
        None => Err(CliError::Usage("no command given (see --help)".into())),
    }
}

/// Arguments with `--manifest <path>` removed, for recording.
fn strip_manifest(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        if skip {
            skip = false;
        } else if a == "--manifest" {
            skip = true;
        } else if !a.starts_with("--manifest=") {
            out.push(a.clone());
        }
    }
    out
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(4),
            };
        }
    };
    if cli.version {
        println!("{}", version_string());
        return ExitCode::SUCCESS;
    }
    let mut buf = Vec::new();
    let mut rec = Record::default();
    let result = run_command(&cli, &mut buf, &mut rec);
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let _ = lock.write_all(&buf);
    let _ = lock.flush();
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    };
    if let (Some(path), Some(command)) = (&cli.manifest, &cli.command) {
        if matches!(command, Command::Replay { .. }) {
            eprintln!("error: replay cannot itself be recorded");
            return ExitCode::from(4);
        }
        match write_manifest(path, command_name(command), &argv, &buf, code, &rec) {
            Ok(()) => {}
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.code());
            }
        }
    }
    ExitCode::from(code)
}

fn write_manifest(path: &Path, command: &str, argv: &[String], stdout: &[u8], code: u8, rec: &Record) -> CliResult<()> {
    let inputs = rec.inputs.iter().map(|p| digest(p)).collect::<CliResult<Vec<_>>>()?;
    let outputs = rec.outputs.iter().map(|p| digest(p)).collect::<CliResult<Vec<_>>>()?;
    let m = ExperimentManifest {
        command: command.to_string(),
        args: strip_manifest(argv),
        inputs,
        seed: rec.seed,
        mesh: rec.mesh,
        tolerances: rec.tolerances.clone(),
        outputs,
        stdout_sha256: sha256_hex(stdout),
        exit_code: code,
        tool_hash: tool_hash(),
    };
    let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(path, json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

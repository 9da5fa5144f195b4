//! Command-line front end: assumption checks, bounded and whole-space
//! solves, barrier tables, transforms and manifest reports.
//!
//! Exit codes: 0 success, 1 failed verdict (hypothesis, convergence,
//! domain violation), 2 unreadable or invalid input, 3 barrier violation.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use selpde::barriers::BracketMode;
use selpde::global::{
    barrier_decay_fit, decay_fit, epsilon_continuation, epsilon_schedule, exhaust,
    ContinuationOptions, ContinuationVerdict, ExhaustOptions, ExhaustVerdict, RadialBarrier,
};
use selpde::grid::{read_field, write_field, DiscreteField};
use selpde::problem::{
    check_assumptions, parse_problem_file, sample_field, AssumptionReport, CheckSampling, DomainSpec,
    IntegralVerdict, MuEstimate, Problem,
};
use selpde::report::{csv, sha256_hex, Cell, OutputDir, RunManifest};
use selpde::transforms::{forward_map, inverse_map, verify_transform_residual, TransformSpec};
use selpde::truncated::TruncatedSolveOptions;
use selpde::Error;

#[derive(Parser)]
#[command(name = "selpde", version, about = "Singular elliptic PDE workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the hypotheses on a and c for a problem file.
    Check {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bracket, truncate and continue in epsilon on a bounded domain.
    SolveBounded {
        problem: PathBuf,
        #[command(flatten)]
        opts: SolveFlags,
    },
    /// Ball exhaustion for a whole-space problem.
    SolveGlobal {
        problem: PathBuf,
        #[command(flatten)]
        opts: SolveFlags,
        /// Only tabulate the barrier w and its bound K.
        #[arg(long)]
        barrier_only: bool,
    },
    /// Barrier w (closed and nested forms) at log-spaced radii.
    Barrier {
        problem: PathBuf,
        /// Largest tabulated radius.
        #[arg(long, default_value_t = 1e3)]
        radius: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map a gradient-problem field w back to the blow-up variable u.
    Transform {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Exponent of h(u) = u^delta (power kind).
        #[arg(long)]
        delta: Option<f64>,
        /// Field file holding w.
        #[arg(long)]
        input: PathBuf,
        /// Problem file providing a(x).
        #[arg(long)]
        problem: PathBuf,
        /// Fraction of the domain excluded next to the boundary.
        #[arg(long, default_value_t = 0.05)]
        window: f64,
        /// Also report the forward/inverse round-trip error.
        #[arg(long)]
        round_trip: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize an output directory and verify its file hashes.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Exponential,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Eigen,
    Poisson,
    Combined,
}

#[derive(Args, Clone)]
struct SolveFlags {
    /// Grid nodes per axis (bounded runs).
    #[arg(long)]
    grid_nodes: Option<usize>,
    /// Ball radius override (bounded) or barrier table radius (global).
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    epsilon_start: Option<f64>,
    #[arg(long)]
    epsilon_floor: Option<f64>,
    #[arg(long)]
    tol_residual: Option<f64>,
    #[arg(long)]
    tol_cauchy: Option<f64>,
    /// Comma-separated ball radii.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    nodes_per_unit: Option<usize>,
    #[arg(long)]
    tol_exhaust: Option<f64>,
    /// `key = value` file with defaults for the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// A failed command: message and exit code.
struct Fail(String, u8);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BarrierViolation { .. } => 3,
            Error::Syntax { .. }
            | Error::UnknownSymbol { .. }
            | Error::UnknownFunction { .. }
            | Error::Arity { .. }
            | Error::ProblemFile { .. }
            | Error::FieldFile { .. }
            | Error::Io { .. }
            | Error::Invalid(_) => 2,
            _ => 1,
        };
        Fail(e.to_string(), code)
    }
}

type CmdResult = std::result::Result<u8, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { problem, out } => cmd_check(&problem, out.as_deref()),
        Command::SolveBounded { problem, opts } => cmd_solve_bounded(&problem, &opts),
        Command::SolveGlobal {
            problem,
            opts,
            barrier_only,
        } => cmd_solve_global(&problem, &opts, barrier_only),
        Command::Barrier {
            problem,
            radius,
            points,
            out,
        } => cmd_barrier(&problem, radius, points, out.as_deref()),
        Command::Transform {
            kind,
            delta,
            input,
            problem,
            window,
            round_trip,
            out,
        } => cmd_transform(kind, delta, &input, &problem, window, round_trip, out.as_deref()),
        Command::Report { dir } => cmd_report(&dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail(format!("{}: {e}", path.display()), 2))
}

struct Loaded {
    problem: Problem,
    path: String,
    hash: String,
}

fn load_problem(path: &Path) -> Result<Loaded, Fail> {
    let text = read(path)?;
    let problem = parse_problem_file(&text, path.parent())?;
    Ok(Loaded {
        problem,
        path: path.display().to_string(),
        hash: sha256_hex(text.as_bytes()),
    })
}

fn manifest_for(command: &str, loaded: &Loaded) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.problem_path = Some(loaded.path.clone());
    m.problem_hash = Some(loaded.hash.clone());
    m
}

fn machine_report(r: &AssumptionReport) -> String {
    let a3 = match r.a3_integral {
        IntegralVerdict::Finite { value, .. } => format!("finite {value:.16e}"),
        IntegralVerdict::Divergent => "divergent".into(),
        IntegralVerdict::Undetermined { .. } => "undetermined".into(),
        IntegralVerdict::NotApplicable => "not-applicable".into(),
    };
    let mu = match r.mu_estimate {
        MuEstimate::Fitted { mu, .. } => format!("{mu:.16e}"),
        MuEstimate::SuperPolynomial => "super-polynomial".into(),
        MuEstimate::Unreliable { .. } => "unreliable".into(),
        MuEstimate::NotApplicable => "not-applicable".into(),
    };
    format!(
        "ac2_a = {}\nac2_c = {}\na3 = {a3}\nmu = {mu}\nall_pass = {}\n",
        r.a_positive.pass,
        r.c_positive.pass,
        r.all_pass()
    )
}

fn cmd_check(path: &Path, out: Option<&Path>) -> CmdResult {
    let start = Instant::now();
    let loaded = load_problem(path)?;
    let report = check_assumptions(&loaded.problem, &CheckSampling::default())?;
    print!("{}", report.render(loaded.problem.dim));
    let pass = report.all_pass();
    println!("{}", if pass { "all checked hypotheses hold" } else { "hypotheses FAIL" });
    if let Some(dir) = out {
        let mut m = manifest_for("check", &loaded);
        let mut od = OutputDir::create(dir)?;
        od.write("check.txt", &machine_report(&report))?;
        m.verdict("all_pass", pass);
        m.duration_secs = start.elapsed().as_secs_f64();
        od.finish(&mut m)?;
    }
    Ok(if pass { 0 } else { 1 })
}

/// Flag values, then config-file values, then defaults.
struct Resolved {
    config: HashMap<String, String>,
}

impl Resolved {
    fn new(flags: &SolveFlags) -> Result<Self, Fail> {
        let mut config = HashMap::new();
        if let Some(path) = &flags.config {
            for (i, line) in read(path)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Fail(format!("{}: line {}: expected `key = value`", path.display(), i + 1), 2))?;
                config.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Self { config })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Fail> {
        Ok(self.get_opt(flag, key)?.unwrap_or(default))
    }

    fn get_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Fail> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.config
            .get(key)
            .map(|s| {
                s.parse()
                    .map_err(|_| Fail(format!("config value `{s}` for `{key}` is invalid"), 2))
            })
            .transpose()
    }
}

fn parse_mode(flag: Option<ModeArg>, cfg: &Resolved) -> Result<BracketMode, Fail> {
    Ok(match flag {
        Some(ModeArg::Eigen) => BracketMode::Eigen,
        Some(ModeArg::Poisson) => BracketMode::Poisson,
        Some(ModeArg::Combined) => BracketMode::Combined,
        None => cfg.get(None, "mode", BracketMode::Eigen)?,
    })
}

fn continuation_options(flags: &SolveFlags, cfg: &Resolved, m: &mut RunManifest) -> Result<ContinuationOptions, Fail> {
    let defaults = ContinuationOptions::default();
    let start = cfg.get(flags.epsilon_start, "epsilon-start", defaults.schedule[0])?;
    let floor = cfg.get(flags.epsilon_floor, "epsilon-floor", *defaults.schedule.last().unwrap())?;
    let tol_residual = cfg.get(flags.tol_residual, "tol-residual", defaults.solve.tol_residual)?;
    let tol_cauchy = cfg.get(flags.tol_cauchy, "tol-cauchy", defaults.tol_cauchy)?;
    let mode = parse_mode(flags.mode, cfg)?;
    m.option("epsilon_start", start);
    m.option("epsilon_floor", floor);
    m.option("tol_residual", tol_residual);
    m.option("tol_cauchy", tol_cauchy);
    m.option("mode", mode);
    Ok(ContinuationOptions {
        schedule: epsilon_schedule(start, floor)?,
        tol_cauchy,
        mode,
        solve: TruncatedSolveOptions {
            tol_residual,
            ..Default::default()
        },
    })
}

fn continuation_trace(cont: &selpde::global::ContinuationResult) -> String {
    let rows: Vec<Vec<Cell>> = cont
        .trace
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.into(),
                s.epsilon.into(),
                s.supdiff.into(),
                s.report.iterations.into(),
                s.report.final_residual.into(),
                s.report.bracket_violations_repaired.into(),
            ]
        })
        .collect();
    csv(&["step", "epsilon", "supdiff", "iterations", "residual", "repairs"], &rows)
}

fn cmd_solve_bounded(path: &Path, flags: &SolveFlags) -> CmdResult {
    let start = Instant::now();
    let mut loaded = load_problem(path)?;
    let cfg = Resolved::new(flags)?;
    let mut m = manifest_for("solve-bounded", &loaded);
    if let Some(r) = cfg.get_opt(flags.radius, "radius")? {
        match loaded.problem.domain {
            DomainSpec::Ball { .. } => loaded.problem.domain = DomainSpec::Ball { radius: r },
            _ => return Err(Fail("--radius applies to ball domains only".into(), 2)),
        }
        m.option("radius", r);
    }
    let problem = &loaded.problem;
    if !problem.domain.is_bounded() {
        return Err(Fail("solve-bounded needs a bounded domain; use solve-global".into(), 2));
    }
    let nodes = cfg.get(flags.grid_nodes, "grid-nodes", 1025)?;
    m.option("grid_nodes", nodes);
    let opts = continuation_options(flags, &cfg, &mut m)?;
    let grid = Arc::new(problem.default_grid(nodes)?);
    let cont = epsilon_continuation(problem, &grid, None, &opts)?;

    let u = &cont.u;
    let (lo, hi) = (cont.bracket.sub.values(), cont.bracket.sup.values());
    let in_bracket = (0..u.len()).all(|k| lo[k] <= u.values()[k] + 1e-12 && u.values()[k] <= hi[k] + 1e-12);
    let mut od = OutputDir::create(&flags.out)?;
    od.write("solution.field", &write_field(u, problem.dim))?;
    od.write("sub.field", &write_field(&cont.bracket.sub, problem.dim))?;
    od.write("super.field", &write_field(&cont.bracket.sup, problem.dim))?;
    od.write("bracket.txt", &cont.bracket.render())?;
    od.write("trace.csv", &continuation_trace(&cont))?;

    m.verdict("continuation", cont.verdict.as_str());
    m.verdict("final_epsilon", format!("{:.16e}", cont.epsilon));
    m.verdict("sigma1", format!("{:.16e}", cont.bracket.sigma1));
    m.verdict("limit_bracket_holds", in_bracket);
    println!("continuation: {} at epsilon = {:.3e}", cont.verdict.as_str(), cont.epsilon);
    println!("sigma1 = {:.6e}, limit bracket holds: {in_bracket}", cont.bracket.sigma1);
    if let Some(exact) = &problem.exact {
        let ex = sample_field(exact, &grid)?;
        let err = u.sup_diff(&ex);
        m.verdict("max_error_vs_exact", format!("{err:.16e}"));
        println!("max error vs exact = {err:.6e}");
    }
    m.duration_secs = start.elapsed().as_secs_f64();
    od.finish(&mut m)?;
    let ok = matches!(cont.verdict, ContinuationVerdict::Cauchy | ContinuationVerdict::FloorReached) && in_bracket;
    Ok(if ok { 0 } else { 1 })
}

fn parse_schedule(s: &str) -> Result<Vec<f64>, Fail> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Fail(format!("bad radius `{t}` in schedule"), 2))
        })
        .collect()
}

fn barrier_table(barrier: &RadialBarrier, radius: f64, points: usize) -> Result<Vec<(f64, f64, f64)>, Fail> {
    let lo = 1e-2f64.min(radius / 10.0);
    let mut radii = vec![0.0];
    radii.extend((0..points).map(|i| lo * (radius / lo).powf(i as f64 / (points.max(2) - 1) as f64)));
    radii
        .into_iter()
        .map(|r| Ok((r, barrier.w(r)?, barrier.w_nested(r)?)))
        .collect::<Result<Vec<_>, Error>>()
        .map_err(Fail::from)
}

fn barrier_csv(rows: &[(f64, f64, f64)]) -> String {
    let cells: Vec<Vec<Cell>> = rows.iter().map(|&(r, w, n)| vec![r.into(), w.into(), n.into()]).collect();
    csv(&["r", "w", "w_nested"], &cells)
}

fn cmd_solve_global(path: &Path, flags: &SolveFlags, barrier_only: bool) -> CmdResult {
    let start = Instant::now();
    let loaded = load_problem(path)?;
    let problem = &loaded.problem;
    if problem.domain != DomainSpec::WholeSpace {
        return Err(Fail("solve-global needs a whole-space problem".into(), 2));
    }
    let cfg = Resolved::new(flags)?;
    let mut m = manifest_for("solve-global", &loaded);
    let report = check_assumptions(problem, &CheckSampling::default())?;
    if !report.all_pass() {
        print!("{}", report.render(problem.dim));
        return Err(Fail("hypotheses fail; refusing to solve".into(), 1));
    }
    let defaults = ExhaustOptions::default();
    let radii = match flags.schedule.as_deref().or(cfg.config.get("schedule").map(String::as_str)) {
        Some(s) => parse_schedule(s)?,
        None => defaults.radii.clone(),
    };
    m.option("schedule", radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","));
    let barrier = RadialBarrier::from_problem(problem)?;
    println!("K = {:.12e}", barrier.k());

    if barrier_only {
        let radius = cfg.get(flags.radius, "radius", *radii.last().unwrap_or(&1e3))?;
        m.option("radius", radius);
        let rows = barrier_table(&barrier, radius, 100)?;
        let mut od = OutputDir::create(&flags.out)?;
        od.write("barrier.csv", &barrier_csv(&rows))?;
        m.verdict("K", format!("{:.16e}", barrier.k()));
        m.duration_secs = start.elapsed().as_secs_f64();
        od.finish(&mut m)?;
        return Ok(0);
    }

    let nodes_per_unit = cfg.get(flags.nodes_per_unit, "nodes-per-unit", defaults.nodes_per_unit)?;
    let tol_exhaust = cfg.get(flags.tol_exhaust, "tol-exhaust", defaults.tol_exhaust)?;
    m.option("nodes_per_unit", nodes_per_unit);
    m.option("tol_exhaust", tol_exhaust);
    let continuation = continuation_options(flags, &cfg, &mut m)?;
    let opts = ExhaustOptions {
        radii,
        nodes_per_unit,
        tol_exhaust,
        continuation,
        ..defaults
    };
    let sol = match exhaust(problem, &opts) {
        Ok(s) => s,
        Err(e @ Error::BarrierViolation { .. }) => {
            println!("barrier violated: {e}");
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };

    let mut od = OutputDir::create(&flags.out)?;
    for (k, ball) in sol.balls.iter().enumerate() {
        od.write(&format!("ball_{k}.field"), &write_field(&ball.u, problem.dim))?;
    }
    let trace: Vec<Vec<Cell>> = sol
        .trace
        .iter()
        .map(|s| vec![s.k.into(), s.radius.into(), s.supdiff.into(), s.barrier_margin.into()])
        .collect();
    od.write("trace.csv", &csv(&["k", "R_k", "supdiff", "barrier_margin"], &trace))?;
    let last = sol.balls.last().expect("at least one ball");
    let grid = last.u.grid();
    let decay: Vec<Vec<Cell>> = (0..grid.len())
        .map(|k| vec![grid.radius_of(k).into(), last.u.values()[k].into(), last.w[k].into()])
        .collect();
    od.write("decay.csv", &csv(&["r", "u", "w"], &decay))?;

    let margin = sol.min_barrier_margin();
    println!("barrier margin min over all nodes = {margin:.6e}");
    println!("exhaustion: {}", sol.verdict.as_str());
    m.verdict("exhaustion", sol.verdict.as_str());
    m.verdict("barrier_margin_min", format!("{margin:.16e}"));
    m.verdict("K", format!("{:.16e}", barrier.k()));
    if let Some(mu) = report.admissible_mu(problem.dim) {
        m.verdict("mu", format!("{mu:.16e}"));
        match decay_fit(&sol, mu, None) {
            Ok(f) => {
                println!(
                    "decay slope {:.4} over [{:.3}, {:.3}] (predicted {:.4})",
                    f.slope, f.window.0, f.window.1, f.predicted
                );
                m.verdict("decay_slope", format!("{:.16e}", f.slope));
                m.verdict("decay_predicted", format!("{:.16e}", f.predicted));
            }
            Err(e) => {
                println!("decay fit: {e}");
                m.verdict("decay_slope", "refused");
            }
        }
        if let Ok(f) = barrier_decay_fit(&sol.barrier, mu, (1e3, 1e4), 32) {
            m.verdict("barrier_slope", format!("{:.16e}", f.slope));
        }
    }
    m.duration_secs = start.elapsed().as_secs_f64();
    od.finish(&mut m)?;
    Ok(if sol.verdict == ExhaustVerdict::Cauchy { 0 } else { 1 })
}

fn cmd_barrier(path: &Path, radius: f64, points: usize, out: Option<&Path>) -> CmdResult {
    let start = Instant::now();
    let loaded = load_problem(path)?;
    let barrier = RadialBarrier::from_problem(&loaded.problem)?;
    let rows = barrier_table(&barrier, radius, points)?;
    let worst = rows
        .iter()
        .map(|&(_, w, n)| (w - n).abs() / barrier.k())
        .fold(0.0, f64::max);
    println!("K = {:.12e}", barrier.k());
    println!("max |w - w_nested| / K = {worst:.3e}");
    if let Some(dir) = out {
        let mut m = manifest_for("barrier", &loaded);
        m.option("radius", radius);
        m.option("points", points);
        let mut od = OutputDir::create(dir)?;
        od.write("barrier.csv", &barrier_csv(&rows))?;
        m.verdict("K", format!("{:.16e}", barrier.k()));
        m.verdict("max_rel_disagreement", format!("{worst:.16e}"));
        m.duration_secs = start.elapsed().as_secs_f64();
        od.finish(&mut m)?;
    }
    Ok(0)
}

fn cmd_transform(
    kind: Kind,
    delta: Option<f64>,
    input: &Path,
    problem: &Path,
    window: f64,
    round_trip: bool,
    out: Option<&Path>,
) -> CmdResult {
    let start = Instant::now();
    let loaded = load_problem(problem)?;
    let (w, dim) = read_field(&read(input)?)?;
    let spec = match (kind, delta) {
        (Kind::Exponential, _) => TransformSpec::Exponential,
        (Kind::Power, Some(d)) => TransformSpec::power(d)?,
        (Kind::Power, None) => return Err(Fail("--kind power needs --delta".into(), 2)),
    };
    println!("transform {spec}: C = {}, induced c* = {}", spec.big_c(), spec.c_star());
    let grid = w.grid().clone();
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| !grid.is_boundary(k)).collect();
    if let Some(&k) = interior.iter().find(|&&k| !(w.values()[k] > 0.0)) {
        return Err(Fail(format!("w must be positive inside the domain; node {k} holds {}", w.values()[k]), 1));
    }
    let residual = verify_transform_residual(&spec, &loaded.problem.a, &w, dim, window).map_err(|e| Fail(e.to_string(), 1))?;
    println!(
        "max |lap u - a h(u)| = {:.6e} (relative {:.6e}) over {} window nodes",
        residual.max_abs,
        residual.max_rel,
        residual.nodes.len()
    );
    let w_inner: Vec<f64> = interior.iter().map(|&k| w.values()[k]).collect();
    let u_inner: Vec<f64> = w_inner
        .iter()
        .map(|&v| match spec {
            TransformSpec::Exponential => -v.ln(),
            TransformSpec::Power { .. } => (v / spec.big_c()).powf(-spec.big_c()),
        })
        .collect();
    let mut round_trip_err = None;
    if round_trip {
        let positive = DiscreteField::new(grid.clone(), w.values().iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect())?;
        let back = forward_map(&spec, &inverse_map(&spec, &positive)?)?;
        let err = (0..grid.len())
            .map(|k| (back.values()[k] - positive.values()[k]).abs() / positive.values()[k])
            .fold(0.0, f64::max);
        println!("round-trip max relative error = {err:.3e}");
        round_trip_err = Some(err);
    }
    if let Some(dir) = out {
        let mut m = manifest_for("transform", &loaded);
        m.option("kind", spec);
        m.option("window", window);
        m.option("input", input.display());
        let mut od = OutputDir::create(dir)?;
        let coords = |k: usize| grid.coords(k);
        let ncoord = coords(0).len();
        let mut header: Vec<&str> = if ncoord == 1 { vec!["x"] } else { vec!["x", "y"] };
        header.extend(["w", "u"]);
        let rows: Vec<Vec<Cell>> = interior
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let mut r: Vec<Cell> = coords(k).into_iter().map(Cell::from).collect();
                r.push(w_inner[i].into());
                r.push(u_inner[i].into());
                r
            })
            .collect();
        od.write("transformed.csv", &csv(&header, &rows))?;
        let mut rheader: Vec<&str> = if ncoord == 1 { vec!["x"] } else { vec!["x", "y"] };
        rheader.push("residual");
        let rrows: Vec<Vec<Cell>> = residual
            .nodes
            .iter()
            .map(|&(k, res)| {
                let mut r: Vec<Cell> = coords(k).into_iter().map(Cell::from).collect();
                r.push(res.into());
                r
            })
            .collect();
        od.write("residual.csv", &csv(&rheader, &rrows))?;
        m.verdict("c_star", spec.c_star());
        m.verdict("max_residual", format!("{:.16e}", residual.max_abs));
        if let Some(e) = round_trip_err {
            m.verdict("round_trip_error", format!("{e:.16e}"));
        }
        m.duration_secs = start.elapsed().as_secs_f64();
        od.finish(&mut m)?;
    }
    Ok(0)
}

fn cmd_report(dir: &Path) -> CmdResult {
    let m = RunManifest::parse(&read(&dir.join("manifest.txt"))?)?;
    println!("command: {} (version {})", m.command, m.version);
    if let Some(p) = &m.problem_path {
        println!("problem: {p}");
    }
    for (k, v) in &m.options {
        println!("  {k} = {v}");
    }
    for (k, v) in &m.verdicts {
        println!("verdict {k}: {v}");
    }
    let mut mismatched = 0;
    for (name, hash) in &m.outputs {
        let status = match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == *hash => "ok",
            Ok(_) => "MODIFIED",
            Err(_) => "MISSING",
        };
        if status != "ok" {
            mismatched += 1;
        }
        println!("file {name}: {status}");
    }
    println!("duration {:.3} s", m.duration_secs);
    Ok(if mismatched == 0 { 0 } else { 1 })
}

//! `qpot`: polynomial quasi-potentials from the command line.
//!
//! Exit codes: 0 certified / success, 1 other failure, 2 unreadable or
//! invalid input, 3 infeasible, 4 uncertified result, 5 solver failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use qpot::decompose::{decompose, DecomposeConfig, DecomposeError, DecompositionResult, DecompositionStatus};
use qpot::linear_oracle::{
    benchmark_case, gradient_part_from_potential, gramian_potential, median_times, riccati_residual,
    verify_linear_decomposition, BenchmarkCase, LinearReport, LinearSystem,
};
use qpot::paths::{
    basin_of, potential_bounds, refine_fixed_point, BoundReport, BoundsConfig, FixedPoint, FixedPointKind,
    PathError,
};
use qpot::poly::{PolyError, Polynomial};
use qpot::report::{coefficient_csv, format_g, grid_axes, grid_csv, ReportError, ResultDocument};
use qpot::system::{load_system, SystemError, SystemSpec};

const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_UNCERTIFIED: u8 = 4;
const EXIT_SOLVER: u8 = 5;

#[derive(Parser)]
#[command(name = "qpot", version, about = "Polynomial quasi-potentials by sub-orthogonal decomposition")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a system and write the result document.
    Decompose(DecomposeArgs),
    /// Tabulate U on a tensor grid over the box.
    Grid(GridArgs),
    /// Predicted and minimized paths with quasi-potential bounds.
    Paths(PathsArgs),
    /// Scaling benchmark on random stable linear systems.
    Bench(BenchArgs),
    /// Compare a linear system's decomposition with the Gramian answer.
    VerifyLinear(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Per-dimension interval `lo:hi`, repeated once per coordinate.
    #[arg(long = "box", value_name = "LO:HI", value_parser = parse_interval, allow_hyphen_values = true)]
    domain: Vec<[f64; 2]>,
    /// Improvement steps after the construction.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Stop once α reaches this value.
    #[arg(long)]
    alpha_stop: Option<f64>,
    /// Stop when the relative defect improvement falls below this.
    #[arg(long)]
    defect_stop: Option<f64>,
    /// Largest Gram residual and negative eigenvalue accepted as certified.
    #[arg(long)]
    certificate_tolerance: Option<f64>,
    /// Feasibility and gap tolerance passed to the SDP solver.
    #[arg(long)]
    solver_tolerance: Option<f64>,
    /// Grid points per axis for the defect measure.
    #[arg(long)]
    grid_points: Option<usize>,
}

impl Overrides {
    fn apply(&self, mut cfg: DecomposeConfig) -> DecomposeConfig {
        if !self.domain.is_empty() {
            cfg.domain = Some(self.domain.clone());
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.alpha_stop {
            cfg.alpha_stop = v;
        }
        if let Some(v) = self.defect_stop {
            cfg.defect_stop = v;
        }
        if let Some(v) = self.certificate_tolerance {
            cfg.certificate_tolerance = v;
        }
        if let Some(v) = self.solver_tolerance {
            cfg.solver_tolerance = v;
        }
        if let Some(v) = self.grid_points {
            cfg.grid_points = v;
        }
        cfg
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// System document (TOML).
    system: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Write `<name>.json` and `<name>_coefficients.csv` here instead of
    /// printing the document.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// System document (TOML).
    system: PathBuf,
    /// Result document from `decompose`; decomposes afresh when absent.
    #[arg(short, long)]
    result: Option<PathBuf>,
    /// Points per axis (1 gives the box midpoint).
    #[arg(long, default_value_t = 21)]
    resolution: usize,
    #[command(flatten)]
    overrides: Overrides,
    /// Output CSV (stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PathsArgs {
    /// System document (TOML).
    system: PathBuf,
    /// Result document from `decompose`; decomposes afresh when absent.
    #[arg(short, long)]
    result: Option<PathBuf>,
    /// Starting fixed point guess `x1,...,xn`; by default each endpoint uses
    /// the stable fixed point its forward trajectory reaches.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    from: Option<Point>,
    /// Endpoint `x1,...,xn`, repeatable; defaults to the document's endpoints.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    to: Vec<Point>,
    /// Interior points of the minimized path.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[command(flatten)]
    overrides: Overrides,
    /// Directory for path CSVs and `bounds.json` (bounds go to stdout when absent).
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    /// Systems per dimension.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    overrides: Overrides,
    /// Output CSV (stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// System document (TOML).
    system: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// A state `x1,...,xn` given on the command line.
#[derive(Debug, Clone)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Point)
}

fn parse_interval(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    if !(lo < hi) {
        return Err(format!("empty interval `{s}`"));
    }
    Ok([lo, hi])
}

/// Writes through a sibling temporary file so readers never see a partial file.
fn write_atomic(path: &FsPath, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn emit(output: Option<&FsPath>, contents: &str) -> Result<()> {
    match output {
        Some(p) => write_atomic(p, contents),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn print_line(text: &str) -> Result<()> {
    emit(None, &format!("{text}\n"))
}

/// A reader closing the pipe early (`| head`) is not an error.
fn closed_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

fn load(path: &FsPath, overrides: &Overrides) -> Result<(SystemSpec, DecomposeConfig)> {
    let spec = load_system(path).with_context(|| format!("system {}", path.display()))?;
    if !overrides.domain.is_empty() && overrides.domain.len() != spec.dimension() {
        return Err(anyhow!(SystemError::Dimension {
            field: "--box".into(),
            expected: spec.dimension(),
            found: overrides.domain.len(),
        }));
    }
    let cfg = overrides.apply(spec.config.clone());
    Ok((spec, cfg))
}

fn run_decompose(spec: &SystemSpec, cfg: &DecomposeConfig) -> Result<DecompositionResult> {
    info!("decomposing {} ({} variables)", spec.name, spec.dimension());
    let r = decompose(&spec.field, cfg).with_context(|| format!("decomposing {}", spec.name))?;
    info!("U = {}", r.u);
    Ok(r)
}

/// The potential from a saved document, or from a fresh decomposition.
fn potential_for(spec: &SystemSpec, cfg: &DecomposeConfig, result: Option<&FsPath>) -> Result<Polynomial> {
    match result {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let doc = ResultDocument::from_json(&text).with_context(|| format!("result {}", path.display()))?;
            if doc.dimension != spec.dimension() {
                bail!(SystemError::Dimension {
                    field: "result dimension".into(),
                    expected: spec.dimension(),
                    found: doc.dimension,
                });
            }
            if doc.status != DecompositionStatus::Certified {
                warn!("result {} is not certified", path.display());
            }
            Ok(doc.potential()?)
        }
        None => {
            let r = run_decompose(spec, cfg)?;
            if !r.is_certified() {
                warn!("decomposition is not certified; bounds may not hold");
            }
            Ok(r.u)
        }
    }
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<u8> {
    let (spec, cfg) = load(&args.system, &args.overrides)?;
    let r = run_decompose(&spec, &cfg)?;
    let doc = ResultDocument::new(&spec.name, &r);
    let json = doc.to_json()?;
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_atomic(&dir.join(format!("{}.json", spec.name)), &json)?;
            write_atomic(&dir.join(format!("{}_coefficients.csv", spec.name)), &coefficient_csv(&r.u))?;
        }
        None => print_line(&json)?,
    }
    eprintln!("{}: U = {}", spec.name, r.u);
    eprintln!(
        "status {:?}, defect measure {}, {} improvement step(s)",
        r.status,
        format_g(r.defect_measure()),
        r.iterations.len().saturating_sub(1)
    );
    Ok(if r.is_certified() { 0 } else { EXIT_UNCERTIFIED })
}

fn cmd_grid(args: &GridArgs) -> Result<u8> {
    let (spec, cfg) = load(&args.system, &args.overrides)?;
    let u = potential_for(&spec, &cfg, args.result.as_deref())?;
    let domain = cfg.domain.clone().unwrap_or_else(|| spec.domain.clone());
    let csv = grid_csv(&u, &grid_axes(&domain, args.resolution))?;
    emit(args.output.as_deref(), &csv)?;
    Ok(0)
}

#[derive(Serialize)]
#[serde(untagged)]
enum BoundEntry {
    Ok {
        #[serde(flatten)]
        report: BoundReport,
        in_box: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        predicted_path: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        oracle_path: Option<String>,
    },
    Failed {
        x_e: Vec<f64>,
        error: String,
    },
}

#[derive(Serialize)]
struct BoundsDocument {
    name: String,
    potential: String,
    /// Keyed by the endpoint coordinates.
    bounds: BTreeMap<String, BoundEntry>,
}

fn stable_points(spec: &SystemSpec) -> Vec<FixedPoint> {
    let mut out: Vec<FixedPoint> = Vec::new();
    for g in &spec.fixed_point_guesses {
        match refine_fixed_point(&spec.field, g) {
            Ok(fp) if fp.kind == FixedPointKind::Stable => {
                if !out.iter().any(|o| o.x.iter().zip(&fp.x).all(|(a, b)| (a - b).abs() < 1e-8)) {
                    out.push(fp);
                }
            }
            Ok(fp) => info!("fixed point {:?} is {:?}", fp.x, fp.kind),
            Err(e) => warn!("fixed point guess {g:?}: {e}"),
        }
    }
    out
}

fn cmd_paths(args: &PathsArgs) -> Result<u8> {
    let (spec, cfg) = load(&args.system, &args.overrides)?;
    let n = spec.dimension();
    let endpoints: Vec<Vec<f64>> =
        if args.to.is_empty() { spec.endpoints.clone() } else { args.to.iter().map(|p| p.0.clone()).collect() };
    let from = args.from.as_ref().map(|p| &p.0);
    if endpoints.is_empty() {
        bail!(SystemError::Invalid { field: "endpoints".into(), message: "no endpoints given".into() });
    }
    for p in endpoints.iter().chain(from) {
        if p.len() != n {
            bail!(SystemError::Dimension { field: "point".into(), expected: n, found: p.len() });
        }
    }
    let u = potential_for(&spec, &cfg, args.result.as_deref())?;
    let origin = match from {
        Some(g) => Some(refine_fixed_point(&spec.field, g).context("refining --from")?),
        None => None,
    };
    let candidates = stable_points(&spec);
    let mut bounds_cfg = BoundsConfig::default();
    bounds_cfg.minimize.interior_points = args.points;
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let mut doc = BoundsDocument { name: spec.name.clone(), potential: u.to_string(), bounds: BTreeMap::new() };
    let mut failures = 0;
    for (k, x_e) in endpoints.iter().enumerate() {
        let key = x_e.iter().map(|v| format_g(*v)).collect::<Vec<_>>().join(",");
        let in_box = spec.in_box(x_e);
        if !in_box {
            warn!("endpoint ({key}) lies outside the box");
        }
        let x_o = match &origin {
            Some(o) => Some(o),
            None => basin_of(&spec.field, x_e, &candidates, &bounds_cfg.predict),
        };
        let entry = match x_o {
            None => Err(anyhow!("no stable fixed point is reached from ({key})")),
            Some(x_o) => potential_bounds(&spec.field, &u, x_o, x_e, &bounds_cfg).map_err(anyhow::Error::from),
        };
        let entry = match entry {
            Ok(b) => {
                let (mut pp, mut op) = (None, None);
                if let Some(dir) = &args.out_dir {
                    let (pname, oname) = (format!("predicted_{k}.csv"), format!("oracle_{k}.csv"));
                    let mut buf = Vec::new();
                    b.predicted.write_csv(&mut buf)?;
                    write_atomic(&dir.join(&pname), std::str::from_utf8(&buf)?)?;
                    buf.clear();
                    b.oracle.write_csv(&mut buf)?;
                    write_atomic(&dir.join(&oname), std::str::from_utf8(&buf)?)?;
                    pp = Some(pname);
                    op = Some(oname);
                }
                let r = &b.report;
                eprintln!(
                    "({key}): lower {}  oracle {}  predicted {}",
                    format_g(r.lower),
                    format_g(r.oracle),
                    format_g(r.predicted_upper)
                );
                BoundEntry::Ok { report: b.report, in_box, predicted_path: pp, oracle_path: op }
            }
            Err(e) => {
                failures += 1;
                eprintln!("({key}): {}", describe(&e));
                BoundEntry::Failed { x_e: x_e.clone(), error: describe(&e) }
            }
        };
        doc.bounds.insert(key, entry);
    }
    let json = serde_json::to_string_pretty(&doc)?;
    match &args.out_dir {
        Some(dir) => write_atomic(&dir.join("bounds.json"), &json)?,
        None => print_line(&json)?,
    }
    Ok(if failures == 0 { 0 } else { EXIT_FAILURE })
}

fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    if args.n_min == 0 || args.n_max < args.n_min {
        bail!(SystemError::Invalid { field: "--n-min/--n-max".into(), message: "empty range".into() });
    }
    let cfg = args.overrides.apply(DecomposeConfig::default());
    let mut csv = String::from("n,seed,seconds,iterations,relative_error,riccati_residual,certified\n");
    let mut cases: Vec<BenchmarkCase> = Vec::new();
    let mut failures = 0;
    for n in args.n_min..=args.n_max {
        for seed in args.seed..args.seed + args.seeds {
            match benchmark_case(n, seed, &cfg) {
                Ok(c) => {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        c.n,
                        c.seed,
                        format_g(c.seconds),
                        c.iterations,
                        format_g(c.relative_error),
                        format_g(c.riccati_residual),
                        c.certified
                    ));
                    if !c.certified {
                        failures += 1;
                    }
                    cases.push(c);
                }
                Err(e) => {
                    failures += 1;
                    warn!("n = {n}, seed = {seed}: {e}");
                }
            }
        }
    }
    emit(args.output.as_deref(), &csv)?;
    let medians = median_times(&cases);
    for (n, t) in &medians {
        let worst = cases.iter().filter(|c| c.n == *n).map(|c| c.relative_error).fold(0.0, f64::max);
        eprintln!("n = {n}: median {} s, worst relative error {}", format_g(*t), format_g(worst));
    }
    let monotone = medians.windows(2).all(|w| w[1].1 >= w[0].1);
    eprintln!("median time monotone in n: {monotone}; failures: {failures}");
    Ok(if failures == 0 { 0 } else { EXIT_UNCERTIFIED })
}

#[derive(Serialize)]
struct LinearVerification {
    name: String,
    a_g: Vec<Vec<f64>>,
    a_g_gramian: Vec<Vec<f64>>,
    relative_error: f64,
    riccati_residual: f64,
    report: LinearReport,
    certified: bool,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn cmd_verify_linear(args: &VerifyArgs) -> Result<u8> {
    let (spec, cfg) = load(&args.system, &args.overrides)?;
    let a = spec.field.as_linear().ok_or_else(|| {
        anyhow!(SystemError::Invalid { field: "drift".into(), message: "not linear and homogeneous".into() })
    })?;
    let sys = LinearSystem::new(a).context("linear system")?;
    let r = run_decompose(&spec, &cfg)?;
    let a_g = gradient_part_from_potential(&r.u)?;
    let exact = gramian_potential(&sys)?.a_g;
    let out = LinearVerification {
        name: spec.name.clone(),
        relative_error: (&a_g - &exact).norm() / exact.norm(),
        riccati_residual: riccati_residual(&(-&a_g), sys.matrix()),
        report: verify_linear_decomposition(sys.matrix(), &a_g),
        a_g: rows(&a_g),
        a_g_gramian: rows(&exact),
        certified: r.is_certified(),
    };
    print_line(&serde_json::to_string_pretty(&out)?)?;
    Ok(if r.is_certified() { 0 } else { EXIT_UNCERTIFIED })
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
}

/// Maps an error chain to its exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<DecomposeError>() {
            return match e {
                DecomposeError::Infeasible { .. } => EXIT_INFEASIBLE,
                DecomposeError::Unbounded { .. } | DecomposeError::SolverFailure { .. } => EXIT_SOLVER,
                DecomposeError::InvalidConfig(_) => EXIT_INPUT,
                _ => EXIT_FAILURE,
            };
        }
        if cause.is::<SystemError>() || cause.is::<PolyError>() || cause.is::<ReportError>() {
            return EXIT_INPUT;
        }
        if cause.is::<PathError>() {
            return EXIT_FAILURE;
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Paths(a) => cmd_paths(a),
        Command::Bench(a) => cmd_bench(a),
        Command::VerifyLinear(a) => cmd_verify_linear(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

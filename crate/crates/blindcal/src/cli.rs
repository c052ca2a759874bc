//! `blindcal` command line.
//!
//! Every subcommand also reads its flags from a JSON file given with
//! `--config`, using the flag names as keys (`"max-iterations": 500`).
//! Flags given on the command line win over the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use blindcal_core::solver::{SolverConfig, StepMode, DEFAULT_MAX_ITERATIONS};
use blindcal_core::{
    to_db, Distribution, GainVector, GroundTruth, SensingEnsemble, SignalVector, SnapshotSet,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{self, InstantClock};
use crate::image;
use crate::io::{self, Array};

pub const OUTPUT_DIR_ENV: &str = "BLINDCAL_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "blindcal",
    version,
    about = "Blind calibration of sensor gains by projected gradient descent"
)]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where artifacts are written [env: BLINDCAL_OUTPUT_DIR, default: .]
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads for independent trials (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON file of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate one instance, synthetic or read from files.
    Solve(SolveArgs),
    /// Success-rate grid over snapshot count and gain error.
    PhaseTransition(PhaseArgs),
    /// Calibrate an imaging system on a netpbm image.
    DemoImage(DemoArgs),
    /// Exact line search against a fixed step on one instance.
    RateCompare(RateArgs),
    /// Deviation of the weighted sample covariance from its mean.
    CheckConcentration(ConcentrationArgs),
    /// Distance of the initial estimate to the signal versus measurement count.
    InitStudy(InitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum StepKind {
    LineSearch,
    Fixed,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SolveArgs {
    /// Signal length (synthetic instances).
    #[arg(long)]
    n: Option<usize>,
    /// Sensors.
    #[arg(long)]
    m: Option<usize>,
    /// Snapshots.
    #[arg(long)]
    p: Option<usize>,
    /// Gain-error radius: amplitude of the synthetic gains and radius of the
    /// solver's gain set.
    #[arg(long)]
    rho: Option<f64>,
    /// Stop once the objective falls below this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, value_enum)]
    step: Option<StepKind>,
    /// Signal step for `--step fixed`.
    #[arg(long)]
    mu: Option<f64>,
    /// gaussian or rademacher.
    #[arg(long)]
    distribution: Option<String>,
    /// Skip the projection of the gains onto the feasible set.
    #[arg(long)]
    #[serde(default)]
    no_projection: bool,
    /// Sensing matrices: BCAL array [p, m, n] or CSV matrix with p*m rows.
    #[arg(long, requires = "measurements")]
    ensemble: Option<PathBuf>,
    /// Measurements: array or matrix [p, m].
    #[arg(long, requires = "ensemble")]
    measurements: Option<PathBuf>,
    /// True signal, for error reporting with file inputs.
    #[arg(long, requires = "truth_d")]
    truth_x: Option<PathBuf>,
    #[arg(long, requires = "truth_x")]
    truth_d: Option<PathBuf>,
    /// Also write the synthetic instance (ensemble.bin, y.bin, x_true.csv, d_true.csv).
    #[arg(long)]
    #[serde(default)]
    save_instance: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct PhaseArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated snapshot counts.
    #[arg(long, value_delimiter = ',')]
    p_values: Option<Vec<usize>>,
    /// Comma-separated gain-error radii.
    #[arg(long, value_delimiter = ',')]
    rho_values: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Success threshold on the relative error, in dB.
    #[arg(long, allow_negative_numbers = true)]
    zeta_db: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Start from the n = 256, m = 64 grid instead of the desk-scale one.
    #[arg(long)]
    #[serde(default)]
    paper_scale: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct DemoArgs {
    /// Binary PGM or PPM; a synthetic 32x32 image is used when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    /// Defaults to 2n/m.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct RateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Fixed signal step.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ConcentrationArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    distribution: Option<String>,
    /// `ones`, `e1`, or comma-separated sensor weights.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct InitArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    p_values: Option<Vec<usize>>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
}

/// Fills unset options from `file`; boolean switches are on if either side
/// sets them.
macro_rules! fill {
    ($cli:expr, $file:expr; $($opt:ident),*; $($flag:ident),*) => {{
        $( if $cli.$opt.is_none() { $cli.$opt = $file.$opt; } )*
        $( $cli.$flag |= $file.$flag; )*
    }};
}

/// Keys accepted in every config file.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct GlobalFile {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
}

const GLOBAL_KEYS: [&str; 3] = ["seed", "output-dir", "workers"];

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<(GlobalFile, T)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
    let serde_json::Value::Object(mut map) = value else {
        return Err(bad("expected a JSON object".into()));
    };
    let mut globals = serde_json::Map::new();
    for key in GLOBAL_KEYS {
        if let Some(v) = map.remove(key) {
            globals.insert(key.into(), v);
        }
    }
    let keyed = |e: serde_path_to_error::Error<serde_json::Error>| {
        let path = e.path().to_string();
        if path == "." {
            bad(e.inner().to_string())
        } else {
            bad(format!("key `{path}`: {}", e.inner()))
        }
    };
    let globals = serde_path_to_error::deserialize(serde_json::Value::Object(globals)).map_err(keyed)?;
    let command = serde_path_to_error::deserialize(serde_json::Value::Object(map)).map_err(keyed)?;
    Ok((globals, command))
}

struct Context {
    seed: u64,
    output_dir: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_distribution(s: Option<&str>) -> Result<Distribution> {
    match s {
        None => Ok(Distribution::Gaussian),
        Some(s) => s
            .parse()
            .map_err(|_| config_err(format!("unknown distribution {s:?} (gaussian or rademacher)"))),
    }
}

/// Parses the command line and runs it. Returns the process exit code: 0 on
/// success, 1 for usage and configuration errors, 2 when the run fails.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn run(mut cli: Cli) -> Result<()> {
    let globals = match (&cli.config, &mut cli.command) {
        (None, _) => GlobalFile::default(),
        (Some(path), Command::Solve(a)) => {
            let (g, f): (_, SolveArgs) = read_config(path)?;
            fill!(a, f; n, m, p, rho, tol, max_iterations, step, mu, distribution,
                ensemble, measurements, truth_x, truth_d; no_projection, save_instance);
            g
        }
        (Some(path), Command::PhaseTransition(a)) => {
            let (g, f): (_, PhaseArgs) = read_config(path)?;
            fill!(a, f; n, m, p_values, rho_values, trials, zeta_db, max_iterations; paper_scale);
            g
        }
        (Some(path), Command::DemoImage(a)) => {
            let (g, f): (_, DemoArgs) = read_config(path)?;
            fill!(a, f; input, m, p, rho, tol, max_iterations;);
            g
        }
        (Some(path), Command::RateCompare(a)) => {
            let (g, f): (_, RateArgs) = read_config(path)?;
            fill!(a, f; n, m, p, rho, mu, tol, max_iterations;);
            g
        }
        (Some(path), Command::CheckConcentration(a)) => {
            let (g, f): (_, ConcentrationArgs) = read_config(path)?;
            fill!(a, f; n, m, p, distribution, theta, trials;);
            g
        }
        (Some(path), Command::InitStudy(a)) => {
            let (g, f): (_, InitArgs) = read_config(path)?;
            fill!(a, f; n, m, p_values, rho, trials;);
            g
        }
    };
    let output_dir = cli
        .output_dir
        .or(globals.output_dir)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let workers = match cli.workers.or(globals.workers) {
        Some(0) => return Err(config_err("--workers must be at least 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = Context {
        seed: cli.seed.or(globals.seed).unwrap_or(0),
        output_dir,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    std::fs::create_dir_all(&ctx.output_dir).map_err(|e| Error::io(&ctx.output_dir, e))?;
    pool.install(|| match cli.command {
        Command::Solve(a) => solve(&ctx, a),
        Command::PhaseTransition(a) => phase_transition(&ctx, a),
        Command::DemoImage(a) => demo_image(&ctx, a),
        Command::RateCompare(a) => rate_compare(&ctx, a),
        Command::CheckConcentration(a) => check_concentration(&ctx, a),
        Command::InitStudy(a) => init_study(&ctx, a),
    })
}

fn load_problem(ensemble: &Path, measurements: &Path) -> Result<(SensingEnsemble, SnapshotSet)> {
    let y = io::read_array(measurements)?;
    let (p, m) = y
        .as_matrix_shape()
        .ok_or_else(|| Error::format(measurements, "measurements must be a [p, m] matrix"))?;
    let a = io::read_array(ensemble)?;
    let n = match a.dims.as_slice() {
        &[ap, am, an] if ap == p && am == m => an,
        &[rows, an] if rows == p * m => an,
        dims => {
            return Err(Error::format(
                ensemble,
                format!("shape {dims:?} does not match measurements with p = {p}, m = {m}"),
            ))
        }
    };
    Ok((
        SensingEnsemble::from_matrices(n, m, p, a.data)?,
        SnapshotSet::new(m, p, y.data)?,
    ))
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let a = io::read_array(path)?;
    match a.as_matrix_shape() {
        Some((_, 1)) | Some((1, _)) => Ok(a.data),
        _ => Err(Error::format(path, "expected a vector")),
    }
}

fn solve(ctx: &Context, a: SolveArgs) -> Result<()> {
    let rho = a.rho.unwrap_or(0.5);
    let tol = a.tol.unwrap_or(1e-7);
    let step_mode = match (a.step.unwrap_or(StepKind::LineSearch), a.mu) {
        (StepKind::LineSearch, None) => StepMode::LineSearch,
        (StepKind::LineSearch, Some(_)) => return Err(config_err("--mu needs --step fixed")),
        (StepKind::Fixed, Some(mu)) => StepMode::Fixed { mu },
        (StepKind::Fixed, None) => return Err(config_err("--step fixed needs --mu")),
    };
    let config = SolverConfig {
        step_mode,
        rho,
        objective_tolerance: tol,
        max_iterations: a.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
        apply_c_rho_projection: !a.no_projection,
        record_trace: true,
    };
    config.validate().map_err(|e| config_err(e.to_string()))?;

    let (ensemble, y, truth) = match (&a.ensemble, &a.measurements) {
        (Some(ens), Some(meas)) => {
            if a.n.is_some() || a.m.is_some() || a.p.is_some() || a.distribution.is_some() {
                return Err(config_err("--n, --m, --p and --distribution apply to synthetic instances only"));
            }
            let (ensemble, y) = load_problem(ens, meas)?;
            let truth = match (&a.truth_x, &a.truth_d) {
                (Some(px), Some(pd)) => Some(GroundTruth::new(
                    SignalVector::new(read_vector(px)?)?,
                    GainVector::new(read_vector(pd)?)?,
                )?),
                _ => None,
            };
            (ensemble, y, truth)
        }
        _ => {
            let (n, m, p) = (a.n.unwrap_or(64), a.m.unwrap_or(16), a.p.unwrap_or(64));
            if n == 0 || m < 2 || p == 0 {
                return Err(config_err("need n >= 1, m >= 2 and p >= 1"));
            }
            let distribution = parse_distribution(a.distribution.as_deref())?;
            let inst = experiments::synthetic_instance(n, m, p, rho, ctx.seed)?;
            let ensemble = if distribution == Distribution::Gaussian {
                inst.ensemble
            } else {
                blindcal_core::model::generate_ensemble(
                    n,
                    m,
                    p,
                    distribution,
                    blindcal_core::derive_seed(ctx.seed, &[("ensemble", 0)]),
                )?
            };
            let y = blindcal_core::model::sense(&ensemble, inst.truth.x(), inst.truth.d())?;
            if a.save_instance {
                let ens = Array::new(vec![p, m, n], ensemble.as_slice().to_vec())?;
                io::write_array(&ctx.path("ensemble.bin"), &ens)?;
                io::write_array(&ctx.path("y.bin"), &Array::new(vec![p, m], y.as_slice().to_vec())?)?;
                io::write_array(&ctx.path("x_true.csv"), &Array::vector(inst.truth.x().values().to_vec()))?;
                io::write_array(&ctx.path("d_true.csv"), &Array::vector(inst.truth.d().values().to_vec()))?;
            }
            (ensemble, y, Some(inst.truth))
        }
    };

    let clock = InstantClock::start();
    let out = blindcal_core::solver::solve_with_clock(&ensemble, &y, &config, truth.as_ref(), &clock)?;
    io::write_trace_csv(&ctx.path("trace.csv"), &out.trace)?;
    io::write_array(&ctx.path("x_hat.csv"), &Array::vector(out.x_hat.values().to_vec()))?;
    io::write_array(&ctx.path("d_hat.csv"), &Array::vector(out.d_hat.values().to_vec()))?;
    let error_db = truth
        .as_ref()
        .map(|t| to_db(t.max_relative_error(out.x_hat.values(), out.d_hat.values())));
    io::write_json(
        &ctx.path("solve.json"),
        &json!({
            "n": ensemble.n(),
            "m": ensemble.m(),
            "p": ensemble.p(),
            "rho": rho,
            "tolerance": tol,
            "seed": ctx.seed,
            "iterations": out.iterations,
            "stop_reason": out.stop_reason.as_str(),
            "objective": out.objective,
            "error_db": error_db,
        }),
    )?;
    match error_db {
        Some(db) => println!(
            "{} after {} iterations, f = {:.3e}, error {db:.2} dB",
            out.stop_reason.as_str(),
            out.iterations,
            out.objective
        ),
        None => println!(
            "{} after {} iterations, f = {:.3e}",
            out.stop_reason.as_str(),
            out.iterations,
            out.objective
        ),
    }
    Ok(())
}

fn phase_transition(ctx: &Context, a: PhaseArgs) -> Result<()> {
    let base = if a.paper_scale {
        experiments::PhaseGridSpec::paper_scale(ctx.seed)
    } else {
        experiments::PhaseGridSpec::desk(ctx.seed)
    };
    let spec = experiments::PhaseGridSpec {
        n: a.n.unwrap_or(base.n),
        m: a.m.unwrap_or(base.m),
        p_values: a.p_values.unwrap_or(base.p_values),
        rho_values: a.rho_values.unwrap_or(base.rho_values),
        trials_per_cell: a.trials.unwrap_or(base.trials_per_cell),
        zeta_db: a.zeta_db.unwrap_or(base.zeta_db),
        max_iterations: a.max_iterations.unwrap_or(base.max_iterations),
        base_seed: ctx.seed,
    };
    spec.validate()?;
    let result = experiments::run_phase_transition(&spec)?;
    io::write_grid_csv(&ctx.path("phase_grid.csv"), &result.cells)?;
    io::write_trials_csv(&ctx.path("phase_trials.csv"), &result.trials)?;
    let trend = result.trend();
    io::write_json(
        &ctx.path("phase_summary.json"),
        &json!({ "spec": spec, "trend": trend, "trend_acceptable": trend.acceptable() }),
    )?;
    println!("     p \\ rho {}", spec.rho_values.iter().map(|r| format!("{r:>8.3}")).collect::<String>());
    for (i, p) in spec.p_values.iter().enumerate() {
        let row: String = (0..spec.rho_values.len())
            .map(|j| format!("{:>8.2}", result.probability(i, j)))
            .collect();
        println!("{p:>12} {row}");
    }
    println!(
        "{} of {} adjacent pairs inverted (largest {:.2})",
        trend.inversions, trend.pairs, trend.max_inversion
    );
    Ok(())
}

fn image_name(stem: &str, img: &image::Image) -> String {
    let ext = if img.channels.len() == 1 { "pgm" } else { "ppm" };
    format!("{stem}.{ext}")
}

fn demo_image(ctx: &Context, a: DemoArgs) -> Result<()> {
    let defaults = experiments::DemoSpec::default();
    let spec = experiments::DemoSpec {
        image: a.input,
        m: a.m.unwrap_or(defaults.m),
        p: a.p,
        rho: a.rho.unwrap_or(defaults.rho),
        tolerance: a.tol.unwrap_or(defaults.tolerance),
        max_iterations: a.max_iterations.unwrap_or(defaults.max_iterations),
        seed: ctx.seed,
    };
    let out = experiments::run_imaging_demo(&spec)?;
    image::write_image(&ctx.path(&image_name("x_hat", &out.x_hat)), &out.x_hat)?;
    image::write_image(&ctx.path(&image_name("x_ls", &out.x_ls)), &out.x_ls)?;
    image::write_image(&ctx.path("d_hat.pgm"), &out.d_hat)?;
    io::write_json(&ctx.path("report.json"), &out.report)?;
    println!(
        "blind calibration {:.2} dB, least squares {:.2} dB, {} iterations ({})",
        out.report.error_db,
        out.report.ls_error_db,
        out.report.iterations,
        out.report.stop_reason.as_str()
    );
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    iterations: usize,
    #[serde(serialize_with = "crate::experiments::ser_stop")]
    stop_reason: blindcal_core::StopReason,
    objective: f64,
    error_db: f64,
    bound: Option<experiments::LinearBound>,
}

fn rate_compare(ctx: &Context, a: RateArgs) -> Result<()> {
    let d = experiments::RateSpec::default();
    let spec = experiments::RateSpec {
        n: a.n.unwrap_or(d.n),
        m: a.m.unwrap_or(d.m),
        p: a.p.unwrap_or(d.p),
        rho: a.rho.unwrap_or(d.rho),
        mu: a.mu.unwrap_or(d.mu),
        tolerance: a.tol.unwrap_or(d.tolerance),
        max_iterations: a.max_iterations.unwrap_or(d.max_iterations),
        seed: ctx.seed,
    };
    let cmp = experiments::run_rate_comparison(&spec, &InstantClock::start())?;
    io::write_trace_csv(&ctx.path("trace_line_search.csv"), &cmp.line_search.trace)?;
    io::write_trace_csv(&ctx.path("trace_fixed.csv"), &cmp.fixed.trace)?;
    let summary = |o: &blindcal_core::SolveOutcome| RunSummary {
        iterations: o.iterations,
        stop_reason: o.stop_reason,
        objective: o.objective,
        error_db: to_db(cmp.truth.max_relative_error(o.x_hat.values(), o.d_hat.values())),
        bound: experiments::linear_bound(&o.trace),
    };
    let (ls, fixed) = (summary(&cmp.line_search), summary(&cmp.fixed));
    println!(
        "line search: {} iterations ({}), fixed step {}: {} iterations ({})",
        ls.iterations,
        ls.stop_reason.as_str(),
        spec.mu,
        fixed.iterations,
        fixed.stop_reason.as_str()
    );
    io::write_json(
        &ctx.path("rate_compare.json"),
        &json!({
            "n": spec.n, "m": spec.m, "p": spec.p, "rho": spec.rho, "mu": spec.mu,
            "tolerance": spec.tolerance, "seed": spec.seed,
            "line_search": ls, "fixed": fixed,
        }),
    )
}

fn parse_theta(s: Option<&str>, m: usize) -> Result<Vec<f64>> {
    match s.unwrap_or("ones") {
        "ones" => Ok(vec![1.0; m]),
        "e1" => {
            let mut t = vec![0.0; m];
            t[0] = 1.0;
            Ok(t)
        }
        list => list
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| config_err(format!("theta must be ones, e1 or numbers, got {list:?}"))),
    }
}

fn check_concentration(ctx: &Context, a: ConcentrationArgs) -> Result<()> {
    let (n, m, p) = (a.n.unwrap_or(32), a.m.unwrap_or(16), a.p.unwrap_or(100));
    if m == 0 {
        return Err(config_err("m must be at least 1"));
    }
    let distribution = parse_distribution(a.distribution.as_deref())?;
    let theta = parse_theta(a.theta.as_deref(), m)?;
    let trials = a.trials.unwrap_or(20);
    let report = experiments::check_concentration(n, m, p, distribution, &theta, trials, ctx.seed)?;
    println!(
        "max deviation {:.4}, mean {:.4} over {trials} trials",
        report.max_deviation, report.mean_deviation
    );
    io::write_json(
        &ctx.path("concentration.json"),
        &json!({
            "n": n, "m": m, "p": p, "distribution": distribution.as_str(),
            "theta": theta, "seed": ctx.seed, "report": report,
        }),
    )
}

fn init_study(ctx: &Context, a: InitArgs) -> Result<()> {
    let d = experiments::InitStudySpec::default();
    let spec = experiments::InitStudySpec {
        n: a.n.unwrap_or(d.n),
        m: a.m.unwrap_or(d.m),
        p_values: a.p_values.unwrap_or(d.p_values),
        rho: a.rho.unwrap_or(d.rho),
        trials: a.trials.unwrap_or(d.trials),
        seed: ctx.seed,
    };
    let study = experiments::init_study(&spec)?;
    for pt in &study.points {
        println!("mp = {:>6}: mean relative error {:.4}", pt.mp, pt.mean_relative_error);
    }
    println!("slope {:.3}", study.slope);
    io::write_json(
        &ctx.path("init_study.json"),
        &json!({ "n": spec.n, "m": spec.m, "rho": spec.rho, "trials": spec.trials,
                 "seed": spec.seed, "study": study }),
    )
}

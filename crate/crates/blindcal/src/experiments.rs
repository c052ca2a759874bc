//! Monte-Carlo studies: the recovery phase transition, the imaging demo,
//! step-rule comparison, and checks of the concentration and
//! initialisation bounds.
//!
//! Trials run on the ambient rayon pool and are collected by index, so
//! results do not depend on the worker count.

use std::path::PathBuf;
use std::time::Instant;

use blindcal_core::baseline::least_squares_baseline;
use blindcal_core::geometry::draw_gain_perturbation;
use blindcal_core::model::{draw_unit_ball_signal, fill_snapshot_matrix, generate_ensemble, sense};
use blindcal_core::solver::{self, Clock, SolverConfig, StepMode, DEFAULT_MAX_ITERATIONS};
use blindcal_core::{
    derive_seed, to_db, Distribution, GainVector, GroundTruth, SensingEnsemble, SignalVector,
    SnapshotSet, SolveOutcome, StopReason,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{self, Image};

pub(crate) fn ser_stop<S: serde::Serializer>(s: &StopReason, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(s.as_str())
}

fn ser_opt_stop<S: serde::Serializer>(
    s: &Option<StopReason>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    match s {
        Some(s) => ser.serialize_str(s.as_str()),
        None => ser.serialize_str("diverged"),
    }
}

/// Stop rule of the phase-transition trials.
pub const PHASE_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_ZETA_DB: f64 = -70.0;

/// Wall-clock trace timestamps.
#[derive(Debug, Clone, Copy)]
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn start() -> Self {
        InstantClock(Instant::now())
    }
}

impl Clock for InstantClock {
    fn elapsed_seconds(&self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64())
    }
}

/// `count` values from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
                .map(|v| (v * 1e12).round() / 1e12)
                .collect()
        }
    }
}

/// Ordinary least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(config_err(format!("rho must lie in [0, 1), got {rho}")))
    }
}

/// A synthetic noiseless problem with its normalised ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ensemble: SensingEnsemble,
    pub y: SnapshotSet,
    pub truth: GroundTruth,
}

/// Signal uniform in the unit ball, gains drawn on the boundary of the
/// `rho` set, Gaussian ensemble; every draw is keyed by `seed`.
///
/// The signal, gain direction and sensing matrices depend on `seed` alone,
/// so instances sharing a seed differ only in `p` (the ensembles nest) and
/// in the gain amplitude `rho`.
pub fn synthetic_instance(n: usize, m: usize, p: usize, rho: f64, seed: u64) -> Result<Instance> {
    let x = draw_unit_ball_signal(n, derive_seed(seed, &[("signal", 0)]))?;
    let d = draw_gain_perturbation(m, rho, derive_seed(seed, &[("gains", 0)]))?;
    let ensemble = generate_ensemble(
        n,
        m,
        p,
        Distribution::Gaussian,
        derive_seed(seed, &[("ensemble", 0)]),
    )?;
    let y = sense(&ensemble, &x, &d)?;
    let truth = GroundTruth::with_rho(x, d, rho)?;
    Ok(Instance { ensemble, y, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseGridSpec {
    pub n: usize,
    pub m: usize,
    pub p_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    pub trials_per_cell: usize,
    pub zeta_db: f64,
    pub base_seed: u64,
    pub max_iterations: usize,
}

impl PhaseGridSpec {
    /// `n = 64`, `m = 16`, `p` from 4 to 256 and seven `rho` from 1e-3 to
    /// 0.99; finishes in seconds.
    pub fn desk(base_seed: u64) -> Self {
        PhaseGridSpec {
            n: 64,
            m: 16,
            p_values: (2..=8).map(|k| 1 << k).collect(),
            rho_values: log_spaced(1e-3, 0.99, 7),
            trials_per_cell: 10,
            zeta_db: DEFAULT_ZETA_DB,
            base_seed,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    /// `n = 256`, `m = 64`, `p` from 4 to 1024.
    pub fn paper_scale(base_seed: u64) -> Self {
        PhaseGridSpec {
            n: 256,
            m: 64,
            p_values: (2..=10).map(|k| 1 << k).collect(),
            rho_values: log_spaced(1e-3, 0.99, 10),
            ..Self::desk(base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m < 2 {
            return Err(config_err("need n >= 1 and m >= 2"));
        }
        if self.p_values.is_empty() || self.p_values.contains(&0) {
            return Err(config_err("p values must be a non-empty list of positive integers"));
        }
        if self.rho_values.is_empty() {
            return Err(config_err("rho values must be non-empty"));
        }
        self.rho_values.iter().try_for_each(|&r| check_rho(r))?;
        if self.trials_per_cell == 0 {
            return Err(config_err("trials per cell must be at least 1"));
        }
        if !(self.zeta_db < 0.0) {
            return Err(config_err(format!("zeta must be negative dB, got {}", self.zeta_db)));
        }
        if self.max_iterations == 0 {
            return Err(config_err("max iterations must be at least 1"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.p_values.len() * self.rho_values.len()
    }

    /// Instance of trial `trial` in cell `(p_index, rho_index)`.
    ///
    /// The trial index alone picks the signal, gain direction and
    /// sensing matrices, so neighbouring cells see the same draws at other
    /// sizes; this couples the cells and reduces the noise in the shape of
    /// the transition.
    pub fn instance(&self, p_index: usize, rho_index: usize, trial: usize) -> Result<Instance> {
        let seed = derive_seed(self.base_seed, &[("trial", trial as u64)]);
        synthetic_instance(
            self.n,
            self.m,
            self.p_values[p_index],
            self.rho_values[rho_index],
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub p: usize,
    pub rho: f64,
    pub trial: usize,
    /// `None` when the solver diverged.
    pub error: Option<f64>,
    pub iterations: usize,
    /// Serialised as `diverged` when absent.
    #[serde(serialize_with = "ser_opt_stop")]
    pub stop_reason: Option<StopReason>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub p: usize,
    pub rho: f64,
    pub trials: usize,
    pub successes: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGridResult {
    pub spec: PhaseGridSpec,
    /// Row-major over `(p, rho)`.
    pub cells: Vec<CellResult>,
    /// Grouped by cell, in trial order.
    pub trials: Vec<TrialRecord>,
}

/// Counts of adjacent cells whose success rates go the wrong way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendReport {
    pub pairs: usize,
    pub inversions: usize,
    pub max_inversion: f64,
}

impl TrendReport {
    /// At most 10% of pairs inverted, none by more than 0.1.
    pub fn acceptable(&self) -> bool {
        self.inversions as f64 <= 0.1 * self.pairs as f64 && self.max_inversion <= 0.1 + 1e-12
    }
}

impl PhaseGridResult {
    pub fn probability(&self, p_index: usize, rho_index: usize) -> f64 {
        self.cells[p_index * self.spec.rho_values.len() + rho_index].probability
    }

    /// Success should not drop as `p` grows nor rise as `rho` grows.
    pub fn trend(&self) -> TrendReport {
        let (np, nr) = (self.spec.p_values.len(), self.spec.rho_values.len());
        let mut report = TrendReport {
            pairs: 0,
            inversions: 0,
            max_inversion: 0.0,
        };
        let mut check = |drop: f64| {
            report.pairs += 1;
            if drop > 0.0 {
                report.inversions += 1;
                report.max_inversion = report.max_inversion.max(drop);
            }
        };
        for i in 0..np {
            for j in 0..nr {
                if i + 1 < np {
                    check(self.probability(i, j) - self.probability(i + 1, j));
                }
                if j + 1 < nr {
                    check(self.probability(i, j + 1) - self.probability(i, j));
                }
            }
        }
        report
    }
}

fn run_trial(spec: &PhaseGridSpec, cell: usize, trial: usize) -> Result<TrialRecord> {
    let nr = spec.rho_values.len();
    let (pi, ri) = (cell / nr, cell % nr);
    let (p, rho) = (spec.p_values[pi], spec.rho_values[ri]);
    let inst = spec.instance(pi, ri, trial)?;
    let config = SolverConfig {
        max_iterations: spec.max_iterations,
        record_trace: false,
        ..SolverConfig::line_search(rho, PHASE_TOLERANCE)
    };
    let threshold = blindcal_core::from_db(spec.zeta_db);
    match solver::solve(&inst.ensemble, &inst.y, &config, None) {
        Ok(out) => {
            let error = inst
                .truth
                .max_relative_error(out.x_hat.values(), out.d_hat.values());
            Ok(TrialRecord {
                p,
                rho,
                trial,
                error: Some(error),
                iterations: out.iterations,
                stop_reason: Some(out.stop_reason),
                success: error < threshold,
            })
        }
        Err(blindcal_core::Error::Divergence { iteration }) => Ok(TrialRecord {
            p,
            rho,
            trial,
            error: None,
            iterations: iteration,
            stop_reason: None,
            success: false,
        }),
        Err(e) => Err(e.into()),
    }
}

pub fn run_phase_transition(spec: &PhaseGridSpec) -> Result<PhaseGridResult> {
    spec.validate()?;
    let per_cell = spec.trials_per_cell;
    let trials: Vec<TrialRecord> = (0..spec.cells() * per_cell)
        .into_par_iter()
        .map(|k| run_trial(spec, k / per_cell, k % per_cell))
        .collect::<Result<_>>()?;
    let cells = trials
        .chunks(per_cell)
        .map(|chunk| {
            let successes = chunk.iter().filter(|t| t.success).count();
            CellResult {
                p: chunk[0].p,
                rho: chunk[0].rho,
                trials: per_cell,
                successes,
                probability: successes as f64 / per_cell as f64,
            }
        })
        .collect();
    Ok(PhaseGridResult {
        spec: spec.clone(),
        cells,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSpec {
    /// Falls back to a synthetic 32x32 grayscale image.
    pub image: Option<PathBuf>,
    pub m: usize,
    /// Defaults to `ceil(2n / m)`.
    pub p: Option<usize>,
    pub rho: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        DemoSpec {
            image: None,
            m: 64,
            p: None,
            rho: 0.99,
            tolerance: 1e-6,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub channel: usize,
    /// Larger of the signal and gain relative errors, in dB.
    pub error_db: f64,
    pub signal_error_db: f64,
    pub gain_error_db: f64,
    pub ls_error_db: f64,
    pub iterations: usize,
    #[serde(serialize_with = "ser_stop")]
    pub stop_reason: StopReason,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    /// Worst channel.
    pub error_db: f64,
    pub ls_error_db: f64,
    /// Most iterations used by any channel.
    pub iterations: usize,
    /// `converged` only if every channel converged.
    #[serde(serialize_with = "ser_stop")]
    pub stop_reason: StopReason,
    /// Largest entrywise error of the mean gain estimate, relative to the
    /// normalised gains, in dB.
    pub gain_entrywise_error_db: f64,
    pub width: usize,
    pub height: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub rho: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub channels: Vec<ChannelReport>,
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub report: DemoReport,
    pub x_hat: Image,
    pub x_ls: Image,
    /// Gain estimate as an image, `d_hat / 2` on a square grid when `m` is a
    /// perfect square and a single row otherwise.
    pub d_hat: Image,
    pub d_true: GainVector,
}

fn gain_map(gains: &[f64]) -> Image {
    let m = gains.len();
    let side = (m as f64).sqrt().round() as usize;
    let (w, h) = if side * side == m { (side, side) } else { (m, 1) };
    Image {
        width: w,
        height: h,
        channels: vec![gains.iter().map(|g| g / 2.0).collect()],
    }
}

fn worst(a: StopReason, b: StopReason) -> StopReason {
    let rank = |s| match s {
        StopReason::Converged => 0,
        StopReason::Stagnated => 1,
        StopReason::MaxIterations => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Calibrates every channel of an image with one shared ensemble and gain
/// vector, and compares with the least-squares estimate that ignores the
/// gains.
pub fn run_imaging_demo(spec: &DemoSpec) -> Result<DemoOutcome> {
    check_rho(spec.rho)?;
    if spec.m < 2 {
        return Err(config_err("m must be at least 2"));
    }
    let img = match &spec.image {
        Some(path) => image::read_image(path)?,
        None => image::synthetic_image(32, 32),
    };
    let n = img.pixels();
    let p = spec.p.unwrap_or((2 * n).div_ceil(spec.m));
    if p == 0 {
        return Err(config_err("p must be at least 1"));
    }
    let config = SolverConfig {
        max_iterations: spec.max_iterations,
        record_trace: false,
        ..SolverConfig::line_search(spec.rho, spec.tolerance)
    };
    config.validate()?;

    let d = draw_gain_perturbation(spec.m, spec.rho, derive_seed(spec.seed, &[("gains", 0)]))?;
    let ensemble = generate_ensemble(
        n,
        spec.m,
        p,
        Distribution::Gaussian,
        derive_seed(spec.seed, &[("ensemble", 0)]),
    )?;

    let per_channel: Vec<(ChannelReport, SolveOutcome, SignalVector)> = img
        .channels
        .par_iter()
        .enumerate()
        .map(|(c, plane)| -> Result<_> {
            let x = SignalVector::new(plane.clone())?;
            let y = sense(&ensemble, &x, &d)?;
            let truth = GroundTruth::new(x, d.clone())?;
            let out = solver::solve(&ensemble, &y, &config, None)?;
            let ls = least_squares_baseline(&ensemble, &y)?;
            let rel = |a: &[f64], b: &[f64]| {
                let num: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
                (num / b.iter().map(|v| v * v).sum::<f64>()).sqrt()
            };
            let sig = rel(out.x_hat.values(), truth.x().values());
            let gain = rel(out.d_hat.values(), truth.d().values());
            let report = ChannelReport {
                channel: c,
                error_db: to_db(sig.max(gain)),
                signal_error_db: to_db(sig),
                gain_error_db: to_db(gain),
                ls_error_db: to_db(rel(ls.values(), truth.x().values())),
                iterations: out.iterations,
                stop_reason: out.stop_reason,
                objective: out.objective,
            };
            Ok((report, out, ls))
        })
        .collect::<Result<_>>()?;

    let channels: Vec<ChannelReport> = per_channel.iter().map(|c| c.0.clone()).collect();
    let fold = |f: fn(&ChannelReport) -> f64| channels.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let mut mean_gain = vec![0.0; spec.m];
    for (_, out, _) in &per_channel {
        for (acc, g) in mean_gain.iter_mut().zip(out.d_hat.values()) {
            *acc += g / per_channel.len() as f64;
        }
    }
    let entrywise = mean_gain
        .iter()
        .zip(d.values())
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);

    let report = DemoReport {
        error_db: fold(|c| c.error_db),
        ls_error_db: fold(|c| c.ls_error_db),
        iterations: channels.iter().map(|c| c.iterations).max().unwrap_or(0),
        stop_reason: channels
            .iter()
            .map(|c| c.stop_reason)
            .fold(StopReason::Converged, worst),
        gain_entrywise_error_db: to_db(entrywise),
        width: img.width,
        height: img.height,
        n,
        m: spec.m,
        p,
        rho: spec.rho,
        tolerance: spec.tolerance,
        seed: spec.seed,
        channels,
    };
    let planes = |pick: fn(&(ChannelReport, SolveOutcome, SignalVector)) -> Vec<f64>| Image {
        width: img.width,
        height: img.height,
        channels: per_channel.iter().map(pick).collect(),
    };
    Ok(DemoOutcome {
        report,
        x_hat: planes(|c| c.1.x_hat.values().to_vec()),
        x_ls: planes(|c| c.2.values().to_vec()),
        d_hat: gain_map(&mean_gain),
        d_true: d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    /// Largest over trials of the spectral norm of the weighted deviation,
    /// divided by `max |theta_i|`.
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub trials: usize,
}

/// Largest dimension accepted by [`check_concentration`].
pub const MAX_CONCENTRATION_DIM: usize = 512;

/// Spectral norm of `(1/mp) sum_{i,l} theta_i (a_il a_il^T - I)` over
/// independent ensembles, normalised by `|theta|_inf`.
pub fn check_concentration(
    n: usize,
    m: usize,
    p: usize,
    distribution: Distribution,
    theta: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if n == 0 || n > MAX_CONCENTRATION_DIM {
        return Err(config_err(format!("n must lie in 1..={MAX_CONCENTRATION_DIM}")));
    }
    if m == 0 || p == 0 || trials == 0 {
        return Err(config_err("m, p and trials must be at least 1"));
    }
    if theta.len() != m {
        return Err(config_err(format!("theta has {} entries, m = {m}", theta.len())));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(config_err("theta must be finite"));
    }
    let scale = theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    if scale == 0.0 {
        return Ok(ConcentrationReport {
            max_deviation: 0.0,
            mean_deviation: 0.0,
            trials,
        });
    }
    let theta_mean = theta.iter().sum::<f64>() / m as f64;
    let deviations: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, &[("trial", t as u64)]);
            let mut acc = DMatrix::<f64>::zeros(n, n);
            let mut buf = vec![0.0; m * n];
            for l in 0..p {
                fill_snapshot_matrix(distribution, trial_seed, l, &mut buf);
                for (i, row) in buf.chunks_exact(n).enumerate() {
                    let a = DVector::from_column_slice(row);
                    acc.ger(theta[i], &a, &a, 1.0);
                }
            }
            acc /= (m * p) as f64;
            for k in 0..n {
                acc[(k, k)] -= theta_mean;
            }
            let spectral = acc.symmetric_eigen().eigenvalues.amax();
            spectral / scale
        })
        .collect();
    Ok(ConcentrationReport {
        max_deviation: deviations.iter().cloned().fold(0.0, f64::max),
        mean_deviation: deviations.iter().sum::<f64>() / trials as f64,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub rho: f64,
    pub mu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            n: 32,
            m: 8,
            p: 16,
            rho: 0.3,
            mu: 1e-4,
            tolerance: 1e-7,
            max_iterations: 1_000_000,
            seed: 0,
        }
    }
}

/// Upper line `ln(delta_k) <= slope k + intercept` over a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearBound {
    pub slope: f64,
    pub intercept: f64,
    /// Least-squares fit before shifting it above every point.
    pub fitted_intercept: f64,
}

/// Fits `ln(delta)` against the iteration index and lifts the fit until it
/// bounds every traced point.
pub fn linear_bound(trace: &blindcal_core::SolverTrace) -> Option<LinearBound> {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter_map(|r| r.delta.filter(|d| *d > 0.0).map(|d| (r.iteration as f64, d.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, fitted) = linear_fit(&xs, &ys);
    let lift = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (slope * x + fitted))
        .fold(0.0, f64::max);
    Some(LinearBound {
        slope,
        intercept: fitted + lift,
        fitted_intercept: fitted,
    })
}

#[derive(Debug, Clone)]
pub struct RateComparison {
    pub truth: GroundTruth,
    pub line_search: SolveOutcome,
    pub fixed: SolveOutcome,
}

/// Solves one synthetic instance with exact line searches and with the
/// fixed step `mu`, both traced against the ground truth.
pub fn run_rate_comparison(spec: &RateSpec, clock: &dyn Clock) -> Result<RateComparison> {
    check_rho(spec.rho)?;
    if spec.n == 0 || spec.m < 2 || spec.p == 0 {
        return Err(config_err("need n >= 1, m >= 2 and p >= 1"));
    }
    let inst = synthetic_instance(spec.n, spec.m, spec.p, spec.rho, spec.seed)?;
    let base = SolverConfig {
        max_iterations: spec.max_iterations,
        ..SolverConfig::line_search(spec.rho, spec.tolerance)
    };
    let fixed = SolverConfig {
        step_mode: StepMode::Fixed { mu: spec.mu },
        ..base.clone()
    };
    base.validate()?;
    fixed.validate()?;
    let run = |config: &SolverConfig| {
        solver::solve_with_clock(&inst.ensemble, &inst.y, config, Some(&inst.truth), clock)
    };
    let line_search = run(&base)?;
    let fixed = run(&fixed)?;
    Ok(RateComparison {
        truth: inst.truth,
        line_search,
        fixed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitStudySpec {
    pub n: usize,
    pub m: usize,
    pub p_values: Vec<usize>,
    pub rho: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for InitStudySpec {
    /// `mp` from `2^6` to `2^14` at `n = 32`.
    fn default() -> Self {
        InitStudySpec {
            n: 32,
            m: 16,
            p_values: (2..=10).map(|k| 1 << k).collect(),
            rho: 0.1,
            trials: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitPoint {
    pub mp: usize,
    pub p: usize,
    /// Mean of `ln(|xi_0 - x*| / |x*|)` over trials.
    pub mean_log_error: f64,
    pub mean_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitStudy {
    pub points: Vec<InitPoint>,
    /// Slope of `mean_log_error` against `ln(mp)`.
    pub slope: f64,
}

/// Distance of the back-projection start to the normalised signal as the
/// number of measurements grows.
pub fn init_study(spec: &InitStudySpec) -> Result<InitStudy> {
    check_rho(spec.rho)?;
    if spec.n == 0 || spec.m < 2 || spec.trials == 0 {
        return Err(config_err("need n >= 1, m >= 2 and trials >= 1"));
    }
    if spec.p_values.len() < 2 || spec.p_values.contains(&0) {
        return Err(config_err("need at least two positive p values"));
    }
    let errors: Vec<Vec<f64>> = spec
        .p_values
        .par_iter()
        .map(|&p| {
            (0..spec.trials)
                .map(|t| {
                    let seed = derive_seed(spec.seed, &[("trial", t as u64)]);
                    let inst = synthetic_instance(spec.n, spec.m, p, spec.rho, seed)?;
                    let (xi0, _) = solver::initialise(&inst.ensemble, &inst.y)?;
                    let x = inst.truth.x().values();
                    let dist: f64 = xi0
                        .values()
                        .iter()
                        .zip(x)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    Ok(dist / inst.truth.x().norm())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let points: Vec<InitPoint> = spec
        .p_values
        .iter()
        .zip(&errors)
        .map(|(&p, errs)| InitPoint {
            mp: spec.m * p,
            p,
            mean_log_error: errs.iter().map(|e| e.ln()).sum::<f64>() / errs.len() as f64,
            mean_relative_error: errs.iter().sum::<f64>() / errs.len() as f64,
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|pt| (pt.mp as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|pt| pt.mean_log_error).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    Ok(InitStudy { points, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spacing_hits_endpoints() {
        let v = log_spaced(1e-3, 0.99, 7);
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], 1e-3);
        assert_eq!(v[6], 0.99);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn line_fit_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 2.0).collect();
        let (s, b) = linear_fit(&xs, &ys);
        assert!((s + 0.5).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(PhaseGridSpec::desk(0).validate().is_ok());
        let bad = PhaseGridSpec {
            zeta_db: 3.0,
            ..PhaseGridSpec::desk(0)
        };
        assert!(bad.validate().is_err());
        let bad = PhaseGridSpec {
            rho_values: vec![1.0],
            ..PhaseGridSpec::desk(0)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_weights_give_zero_deviation() {
        let r = check_concentration(4, 3, 2, Distribution::Gaussian, &[0.0; 3], 2, 1).unwrap();
        assert_eq!(r.max_deviation, 0.0);
    }

    fn small_grid() -> PhaseGridSpec {
        PhaseGridSpec {
            n: 16,
            m: 4,
            p_values: vec![1, 4, 16],
            rho_values: vec![0.01, 0.9],
            trials_per_cell: 4,
            ..PhaseGridSpec::desk(7)
        }
    }

    fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(f)
    }

    #[test]
    fn grid_is_independent_of_worker_count() {
        let spec = small_grid();
        let a = in_pool(1, || run_phase_transition(&spec).unwrap());
        let b = in_pool(3, || run_phase_transition(&spec).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 6);
        for c in &a.cells {
            assert_eq!(c.probability, c.successes as f64 / c.trials as f64);
        }
    }

    #[test]
    fn single_snapshot_cells_never_succeed() {
        let r = run_phase_transition(&small_grid()).unwrap();
        assert_eq!(r.probability(0, 1), 0.0);
        assert_eq!(r.probability(0, 0), 0.0);
    }

    #[test]
    fn trials_reproduce_from_their_indices() {
        let spec = small_grid();
        let a = spec.instance(2, 1, 3).unwrap();
        let b = spec.instance(2, 1, 3).unwrap();
        assert_eq!(a.y, b.y);
        let other = spec.instance(2, 1, 2).unwrap();
        assert_ne!(a.y, other.y);
        // Smaller cells see a prefix of the same ensemble.
        let small = spec.instance(1, 1, 3).unwrap();
        assert_eq!(small.ensemble.as_slice(), &a.ensemble.as_slice()[..small.ensemble.as_slice().len()]);
    }

    #[test]
    fn trend_counts_inversions() {
        let mut r = run_phase_transition(&small_grid()).unwrap();
        for (k, c) in r.cells.iter_mut().enumerate() {
            c.probability = [0.0, 0.0, 0.5, 0.2, 1.0, 1.0][k];
        }
        let t = r.trend();
        assert_eq!(t.pairs, 7);
        assert_eq!(t.inversions, 0);
        r.cells[4].probability = 0.3;
        let t = r.trend();
        assert_eq!(t.inversions, 2);
        // The p drop is 0.2 and the rho rise is 0.7.
        assert!((t.max_inversion - 0.7).abs() < 1e-12);
        assert!(!t.acceptable());
    }

    fn write_test_image(dir: &std::path::Path) -> PathBuf {
        let img = crate::image::synthetic_image(16, 16);
        let path = dir.join("in.pgm");
        crate::image::write_image(&path, &img).unwrap();
        path
    }

    #[test]
    fn demo_without_gain_error_matches_least_squares() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DemoSpec {
            image: Some(write_test_image(dir.path())),
            m: 16,
            rho: 0.0,
            tolerance: 1e-12,
            ..DemoSpec::default()
        };
        let out = run_imaging_demo(&spec).unwrap();
        assert_eq!(out.report.p, 32);
        let a = &out.x_hat.channels[0];
        let b = &out.x_ls.channels[0];
        let num: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
        let den: f64 = b.iter().map(|v| v * v).sum();
        assert!(to_db((num / den).sqrt()) < -60.0);
    }

    #[test]
    fn demo_gain_map_matches_reported_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DemoSpec {
            image: Some(write_test_image(dir.path())),
            m: 16,
            rho: 0.9,
            ..DemoSpec::default()
        };
        let out = run_imaging_demo(&spec).unwrap();
        let r = &out.report;
        assert_eq!(r.stop_reason, StopReason::Converged);
        assert!(r.error_db < -50.0, "{}", r.error_db);
        assert!(r.ls_error_db > r.error_db + 20.0);
        assert!(r.gain_entrywise_error_db <= r.error_db + 6.0);
        // The stored map is the gain estimate halved.
        let recovered: Vec<f64> = out.d_hat.channels[0].iter().map(|v| 2.0 * v).collect();
        for (g, d) in recovered.iter().zip(out.d_true.values()) {
            assert!((g - d).abs() / d <= blindcal_core::from_db(r.gain_entrywise_error_db) * 1.0001);
        }
    }

    #[test]
    fn missing_image_is_an_io_error() {
        let spec = DemoSpec {
            image: Some("/nonexistent/blindcal.ppm".into()),
            ..DemoSpec::default()
        };
        assert!(matches!(run_imaging_demo(&spec), Err(Error::Io { .. })));
    }

    #[test]
    fn concentration_shrinks_and_is_uniform_in_weights() {
        let ones = vec![1.0; 8];
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        let dev = |p, theta: &[f64]| {
            check_concentration(12, 8, p, Distribution::Gaussian, theta, 6, 3).unwrap().mean_deviation
        };
        assert!(dev(200, &ones) < dev(50, &ones));
        assert!(dev(50, &e1) <= 1.5 * dev(50, &ones));
    }

    #[test]
    fn fixed_step_trace_has_linear_bound() {
        let spec = RateSpec {
            n: 8,
            m: 4,
            p: 16,
            mu: 0.02,
            tolerance: 1e-8,
            max_iterations: 100_000,
            ..RateSpec::default()
        };
        let cmp = run_rate_comparison(&spec, &solver::NoClock).unwrap();
        assert!(cmp.line_search.iterations < cmp.fixed.iterations);
        for out in [&cmp.line_search, &cmp.fixed] {
            assert_eq!(out.stop_reason, StopReason::Converged);
            let b = linear_bound(&out.trace).unwrap();
            assert!(b.slope < 0.0);
            for r in &out.trace.records {
                assert!(r.delta.unwrap().ln() <= b.slope * r.iteration as f64 + b.intercept + 1e-9);
            }
        }
    }

    #[test]
    fn init_error_decays_like_inverse_root() {
        let spec = InitStudySpec {
            n: 8,
            m: 4,
            p_values: vec![8, 32, 128, 512],
            trials: 20,
            ..InitStudySpec::default()
        };
        let study = init_study(&spec).unwrap();
        assert!((study.slope + 0.5).abs() < 0.15, "{}", study.slope);
    }

    #[test]
    fn gain_map_is_square_when_possible() {
        assert_eq!(gain_map(&[2.0; 16]).width, 4);
        let row = gain_map(&[2.0; 6]);
        assert_eq!((row.width, row.height), (6, 1));
        assert_eq!(row.channels[0][0], 1.0);
    }
}

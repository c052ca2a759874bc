//! Projected gradient descent for blind gain calibration.
//!
//! Start from `xi_0 = (1/mp) sum_l A_l^T y_l`, `gamma_0 = 1`, then repeat
//!
//! ```text
//! xi      <- xi    - mu_xi    grad_xi f
//! gamma   <- gamma - mu_gamma P(grad_gamma f)      P = I - 11^T/m
//! gamma   <- proj_{C_rho}(gamma)                   (optional)
//! ```
//!
//! with either exact line searches along each block or fixed steps.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{self, check_rho, project_zero_sum_in_place};
use crate::linalg;
use crate::model::{GainVector, GroundTruth, SensingEnsemble, SignalVector, SnapshotSet};
use crate::objective::{EvaluationPoint, Residuals};

/// Default objective threshold used by the phase-transition experiments.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Every iteration is traced up to this index, then every tenth.
pub const DENSE_TRACE_LIMIT: usize = 10_000;
/// Stagnation guard: stop when `f` fell by less than this fraction over the window.
pub const STAGNATION_RELATIVE_DECREASE: f64 = 1e-14;
pub const STAGNATION_WINDOW: usize = 100;
/// Cached forward images are recomputed from scratch this often.
const REFRESH_INTERVAL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// Exact minimisation of `f` along each block's descent direction.
    LineSearch,
    /// `mu_xi = mu`, `mu_gamma = mu m / |xi_0|^2`.
    Fixed { mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub step_mode: StepMode,
    pub rho: f64,
    pub objective_tolerance: f64,
    pub max_iterations: usize,
    pub apply_c_rho_projection: bool,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_mode: StepMode::LineSearch,
            rho: 0.5,
            objective_tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            apply_c_rho_projection: true,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn line_search(rho: f64, objective_tolerance: f64) -> Self {
        Self {
            rho,
            objective_tolerance,
            ..Self::default()
        }
    }

    pub fn fixed(mu: f64, rho: f64, objective_tolerance: f64) -> Self {
        Self {
            step_mode: StepMode::Fixed { mu },
            rho,
            objective_tolerance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if !(self.objective_tolerance > 0.0 && self.objective_tolerance.is_finite()) {
            return Err(Error::param("objective tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        if let StepMode::Fixed { mu } = self.step_mode {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::param("fixed step mu must be positive"));
            }
        }
        Ok(())
    }
}

/// Iterate `(xi_k, gamma_k)` together with `f(xi_k, gamma_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub xi: SignalVector,
    pub gamma: GainVector,
    pub iteration: usize,
    pub objective: f64,
}

impl SolverState {
    pub fn point(&self) -> EvaluationPoint {
        EvaluationPoint::new(self.xi.clone(), self.gamma.clone())
    }
}

/// One traced iteration. Steps are those that produced this iterate (zero
/// for the initial point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub mu_xi: f64,
    pub mu_gamma: f64,
    pub delta: Option<f64>,
    pub delta_f: Option<f64>,
    pub elapsed_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnated,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Stagnated => "stagnated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x_hat: SignalVector,
    pub d_hat: GainVector,
    pub trace: SolverTrace,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub objective: f64,
}

/// Wall-clock source for trace timestamps. The core has no clock of its own.
pub trait Clock {
    fn elapsed_seconds(&self) -> Option<f64>;
}

/// Leaves the trace timestamps empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_seconds(&self) -> Option<f64> {
        None
    }
}

fn check_problem(ensemble: &SensingEnsemble, y: &SnapshotSet) -> Result<()> {
    ensemble.check_snapshots(y)
}

/// `xi_0 = (1/mp) sum_l A_l^T y_l`, `gamma_0 = 1`.
pub fn initialise(ensemble: &SensingEnsemble, y: &SnapshotSet) -> Result<(SignalVector, GainVector)> {
    check_problem(ensemble, y)?;
    let (n, m, p) = (ensemble.n(), ensemble.m(), ensemble.p());
    let mut xi = linalg::pairwise_sum_vec(p, n, &mut |l, acc| {
        ensemble.apply_transpose_acc(l, y.snapshot(l), acc);
    });
    linalg::scale(&mut xi, 1.0 / (m * p) as f64);
    Ok((SignalVector::from_vec_unchecked(xi), GainVector::ones(m)))
}

/// `sum <r, s> / sum |s|^2`, or zero when the direction is degenerate.
fn quadratic_minimiser(num: f64, den: f64) -> f64 {
    if den > 0.0 && num.is_finite() && den.is_finite() {
        num / den
    } else {
        0.0
    }
}

/// Working state of a run: the iterate plus cached `A_l xi` and residuals.
struct Engine<'a> {
    ensemble: &'a SensingEnsemble,
    y: &'a SnapshotSet,
    config: &'a SolverConfig,
    xi: Vec<f64>,
    gamma: Vec<f64>,
    res: Residuals,
    objective: f64,
    fixed_mu_gamma: f64,
    /// `A_l grad_xi`, reused to update the cached forward images.
    a_dir: Vec<f64>,
    steps_since_refresh: usize,
}

impl<'a> Engine<'a> {
    fn new(
        ensemble: &'a SensingEnsemble,
        y: &'a SnapshotSet,
        config: &'a SolverConfig,
        xi: Vec<f64>,
        gamma: Vec<f64>,
        xi0_norm_sq: f64,
    ) -> Self {
        let res = Residuals::compute(ensemble, y, &xi, &gamma);
        let objective = res.objective();
        let fixed_mu_gamma = match config.step_mode {
            StepMode::Fixed { mu } if xi0_norm_sq > 0.0 => mu * ensemble.m() as f64 / xi0_norm_sq,
            _ => 0.0,
        };
        Self {
            ensemble,
            y,
            config,
            xi,
            gamma,
            res,
            objective,
            fixed_mu_gamma,
            a_dir: vec![0.0; ensemble.m() * ensemble.p()],
            steps_since_refresh: 0,
        }
    }

    fn directions(&self) -> (Vec<f64>, Vec<f64>) {
        let g = self.res.grad_xi(self.ensemble, &self.gamma);
        let mut h = self.res.grad_gamma();
        project_zero_sum_in_place(&mut h);
        (g, h)
    }

    /// Exact block steps at the current iterate. Fills `a_dir` with `A_l g`.
    fn line_search(&mut self, g: &[f64], h: &[f64]) -> (f64, f64) {
        let (m, p) = (self.ensemble.m(), self.ensemble.p());
        for (l, out) in self.a_dir.chunks_exact_mut(m).enumerate() {
            self.ensemble.apply(l, g, out);
        }
        let gamma = &self.gamma;
        let res = &self.res;
        let a_dir = &self.a_dir;
        // xi block: s_l = gamma . (A_l g)
        let num_xi = linalg::pairwise_sum_by(p, &mut |l| {
            let ag = &a_dir[l * m..(l + 1) * m];
            res.r(l)
                .iter()
                .zip(ag)
                .zip(gamma)
                .map(|((r, a), gi)| r * gi * a)
                .sum()
        });
        let den_xi = linalg::pairwise_sum_by(p, &mut |l| {
            let ag = &a_dir[l * m..(l + 1) * m];
            ag.iter().zip(gamma).map(|(a, gi)| (gi * a) * (gi * a)).sum()
        });
        // gamma block: s_l = (A_l xi) . h
        let num_g = linalg::pairwise_sum_by(p, &mut |l| {
            res.r(l)
                .iter()
                .zip(res.z(l))
                .zip(h)
                .map(|((r, z), hi)| r * z * hi)
                .sum()
        });
        let den_g = linalg::pairwise_sum_by(p, &mut |l| {
            res.z(l)
                .iter()
                .zip(h)
                .map(|(z, hi)| (z * hi) * (z * hi))
                .sum()
        });
        (quadratic_minimiser(num_xi, den_xi), quadratic_minimiser(num_g, den_g))
    }

    /// One descent step; returns the steps taken.
    fn step(&mut self, next_iteration: usize) -> Result<(f64, f64)> {
        let (g, h) = self.directions();
        let (mu_xi, mu_gamma, have_a_dir) = match self.config.step_mode {
            StepMode::LineSearch => {
                let (a, b) = self.line_search(&g, &h);
                (a, b, true)
            }
            StepMode::Fixed { mu } => (mu, self.fixed_mu_gamma, false),
        };

        linalg::axpy(-mu_xi, &g, &mut self.xi);
        linalg::axpy(-mu_gamma, &h, &mut self.gamma);
        if self.config.apply_c_rho_projection {
            if !linalg::is_finite(&self.gamma) {
                return Err(Error::Divergence {
                    iteration: next_iteration,
                });
            }
            self.gamma = geometry::project_c_rho(&self.gamma, self.config.rho)?.into_inner();
        }

        self.steps_since_refresh += 1;
        if have_a_dir && self.steps_since_refresh < REFRESH_INTERVAL {
            // A_l xi_{k+1} = A_l xi_k - mu_xi A_l g
            linalg::axpy(-mu_xi, &self.a_dir, &mut self.res.z);
            self.res.refresh_residual(self.y, &self.gamma);
        } else {
            self.res = Residuals::compute(self.ensemble, self.y, &self.xi, &self.gamma);
            self.steps_since_refresh = 0;
        }
        self.objective = self.res.objective();
        if !self.objective.is_finite() {
            return Err(Error::Divergence {
                iteration: next_iteration,
            });
        }
        Ok((mu_xi, mu_gamma))
    }
}

fn check_state(ensemble: &SensingEnsemble, y: &SnapshotSet, state: &SolverState) -> Result<()> {
    check_problem(ensemble, y)?;
    ensemble.check_signal(state.xi.len())?;
    ensemble.check_gains(state.gamma.len())
}

/// The two exact step sizes at `state`: each minimises the one-dimensional
/// quadratic `f` along its own block's descent direction, holding the other
/// block fixed. A vanishing gradient block yields a zero step.
pub fn exact_line_search(
    state: &SolverState,
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
) -> Result<(f64, f64)> {
    check_state(ensemble, y, state)?;
    let config = SolverConfig::default();
    let mut engine = Engine::new(
        ensemble,
        y,
        &config,
        state.xi.values().to_vec(),
        state.gamma.values().to_vec(),
        0.0,
    );
    let (g, h) = engine.directions();
    Ok(engine.line_search(&g, &h))
}

/// One iteration from `state`. In fixed-step mode the gain step is
/// `mu m / |xi|^2` evaluated at the given state's signal (use [`solve`] for
/// the `xi_0`-based rule).
pub fn iterate(
    state: &SolverState,
    config: &SolverConfig,
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
) -> Result<SolverState> {
    config.validate()?;
    check_state(ensemble, y, state)?;
    let mut engine = Engine::new(
        ensemble,
        y,
        config,
        state.xi.values().to_vec(),
        state.gamma.values().to_vec(),
        state.xi.norm() * state.xi.norm(),
    );
    engine.step(state.iteration + 1)?;
    Ok(SolverState {
        xi: SignalVector::from_vec_unchecked(engine.xi),
        gamma: GainVector::from_vec_unchecked(engine.gamma),
        iteration: state.iteration + 1,
        objective: engine.objective,
    })
}

/// Runs initialisation and descent until `f < tolerance`, the iteration
/// budget runs out, or the objective stagnates.
pub fn solve(
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
    config: &SolverConfig,
    truth: Option<&GroundTruth>,
) -> Result<SolveOutcome> {
    solve_with_clock(ensemble, y, config, truth, &NoClock)
}

pub fn solve_with_clock(
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
    config: &SolverConfig,
    truth: Option<&GroundTruth>,
    clock: &dyn Clock,
) -> Result<SolveOutcome> {
    config.validate()?;
    check_problem(ensemble, y)?;
    if let Some(t) = truth {
        ensemble.check_signal(t.x().len())?;
        ensemble.check_gains(t.d().len())?;
    }
    let (xi0, gamma0) = initialise(ensemble, y)?;
    let xi0_norm_sq = linalg::norm_sq(xi0.values());
    let mut engine = Engine::new(
        ensemble,
        y,
        config,
        xi0.into_inner(),
        gamma0.into_inner(),
        xi0_norm_sq,
    );
    if !engine.objective.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }

    let mut trace = SolverTrace::default();
    let record = |trace: &mut SolverTrace, engine: &Engine<'_>, k: usize, mu: (f64, f64)| -> Result<()> {
        let (delta, delta_f) = match truth {
            Some(t) => {
                let pt = EvaluationPoint::new(
                    SignalVector::from_vec_unchecked(engine.xi.clone()),
                    GainVector::from_vec_unchecked(engine.gamma.clone()),
                );
                (Some(geometry::delta(&pt, t)?), Some(geometry::delta_f(&pt, t)?))
            }
            None => (None, None),
        };
        trace.records.push(TraceRecord {
            iteration: k,
            objective: engine.objective,
            mu_xi: mu.0,
            mu_gamma: mu.1,
            delta,
            delta_f,
            elapsed_seconds: clock.elapsed_seconds(),
        });
        Ok(())
    };

    if config.record_trace {
        record(&mut trace, &engine, 0, (0.0, 0.0))?;
    }

    let mut history: VecDeque<f64> = VecDeque::with_capacity(STAGNATION_WINDOW + 1);
    history.push_back(engine.objective);
    let mut k = 0usize;
    let mut last_recorded = 0usize;
    let mut last_mu = (0.0, 0.0);
    let stop_reason = loop {
        if engine.objective < config.objective_tolerance {
            break StopReason::Converged;
        }
        if k >= config.max_iterations {
            break StopReason::MaxIterations;
        }
        if history.len() > STAGNATION_WINDOW {
            let old = history[0];
            let decrease = (old - engine.objective) / old;
            if decrease < STAGNATION_RELATIVE_DECREASE {
                break StopReason::Stagnated;
            }
        }
        last_mu = engine.step(k + 1)?;
        k += 1;
        history.push_back(engine.objective);
        if history.len() > STAGNATION_WINDOW + 1 {
            history.pop_front();
        }
        if config.record_trace && (k <= DENSE_TRACE_LIMIT || k % 10 == 0) {
            record(&mut trace, &engine, k, last_mu)?;
            last_recorded = k;
        }
    };
    if config.record_trace && last_recorded != k {
        record(&mut trace, &engine, k, last_mu)?;
    }

    Ok(SolveOutcome {
        x_hat: SignalVector::from_vec_unchecked(engine.xi),
        d_hat: GainVector::from_vec_unchecked(engine.gamma),
        trace,
        stop_reason,
        iterations: k,
        objective: engine.objective,
    })
}

/// Analysis parameter `delta` used when none is supplied.
pub const DEFAULT_ANALYSIS_DELTA: f64 = 0.1;

/// `kappa = sqrt(delta^2 + rho^2)`, the neighbourhood radius reached by the
/// initialisation.
pub fn default_kappa(delta: f64, rho: f64) -> f64 {
    libm::sqrt(delta * delta + rho * rho)
}

/// Constants of the fixed-step convergence guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionDiagnostics {
    /// `2 (1 - 9 rho - 2 delta)`
    pub eta: f64,
    /// `4 sqrt(2) (1 + rho + (1 + kappa) |x*|)`
    pub lipschitz: f64,
    /// `min(1, |x*|^2 / m)`
    pub tau: f64,
    /// `1 - eta mu + (L^2 / tau) mu^2`, the per-iteration bound on the decay of `delta`.
    pub factor: f64,
    /// Steps in `(0, tau eta / L^2)` contract.
    pub max_step: f64,
    /// `tau eta / (2 L^2)` minimises `factor`.
    pub optimal_step: f64,
    /// `false` when `eta <= 0`: the guarantee says nothing, though descent may
    /// still converge in practice.
    pub theory_applies: bool,
}

pub fn contraction_diagnostics(
    rho: f64,
    delta: f64,
    kappa: f64,
    x_star_norm: f64,
    m: usize,
    mu: f64,
) -> Result<ContractionDiagnostics> {
    check_rho(rho)?;
    if !(delta >= 0.0 && kappa >= 0.0 && x_star_norm >= 0.0 && mu >= 0.0) {
        return Err(Error::param("delta, kappa, |x*| and mu must be non-negative"));
    }
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    let eta = 2.0 * (1.0 - 9.0 * rho - 2.0 * delta);
    let lipschitz = 4.0 * core::f64::consts::SQRT_2 * (1.0 + rho + (1.0 + kappa) * x_star_norm);
    let tau = f64::min(1.0, x_star_norm * x_star_norm / m as f64);
    let l2 = lipschitz * lipschitz;
    let factor = 1.0 - eta * mu + l2 / tau * mu * mu;
    let theory_applies = eta > 0.0 && tau > 0.0;
    let (max_step, optimal_step) = if theory_applies {
        (tau * eta / l2, tau * eta / (2.0 * l2))
    } else {
        (0.0, 0.0)
    };
    Ok(ContractionDiagnostics {
        eta,
        lipschitz,
        tau,
        factor,
        max_step,
        optimal_step,
        theory_applies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_ensemble, sense, Distribution};

    #[test]
    fn diagnostics_examples() {
        let d = contraction_diagnostics(0.0, 0.0, 0.0, 1.0, 1, 0.0).unwrap();
        assert_eq!(d.eta, 2.0);
        assert_eq!(d.factor, 1.0);
        assert!((d.lipschitz - 8.0 * core::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((d.lipschitz - 11.3137).abs() < 1e-4);
        assert_eq!(d.tau, 1.0);
        assert!((d.optimal_step - 1.0 / 128.0).abs() < 1e-15);
        let at_opt = contraction_diagnostics(0.0, 0.0, 0.0, 1.0, 1, d.optimal_step).unwrap();
        assert!((at_opt.factor - (1.0 - 1.0 / 128.0)).abs() < 1e-14);
    }

    #[test]
    fn diagnostics_out_of_range_is_a_warning() {
        let d = contraction_diagnostics(0.5, 0.1, 0.5, 1.0, 16, 1e-4).unwrap();
        assert!(d.eta < 0.0);
        assert!(!d.theory_applies);
        assert!(contraction_diagnostics(1.0, 0.1, 0.5, 1.0, 16, 1e-4).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::line_search(1.0, 1e-7).validate().is_err());
        assert!(SolverConfig::line_search(0.1, 0.0).validate().is_err());
        assert!(SolverConfig::fixed(0.0, 0.1, 1e-7).validate().is_err());
        let c = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_gains_are_ones() {
        let e = generate_ensemble(5, 4, 3, Distribution::Gaussian, 1).unwrap();
        let x = SignalVector::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let y = sense(&e, &x, &GainVector::new(vec![1.1, 0.9, 1.0, 1.0]).unwrap()).unwrap();
        let (_, g0) = initialise(&e, &y).unwrap();
        assert_eq!(g0.values(), &[1.0; 4]);
    }

    #[test]
    fn fixed_point_at_truth() {
        let e = generate_ensemble(6, 4, 5, Distribution::Gaussian, 3).unwrap();
        let x = SignalVector::new(vec![0.5, -0.2, 0.1, 0.9, -0.4, 0.3]).unwrap();
        let d = GainVector::new(vec![1.1, 0.9, 1.05, 0.95]).unwrap();
        let y = sense(&e, &x, &d).unwrap();
        let state = SolverState {
            xi: x.clone(),
            gamma: d.clone(),
            iteration: 0,
            objective: 0.0,
        };
        assert_eq!(exact_line_search(&state, &e, &y).unwrap(), (0.0, 0.0));
        let next = iterate(&state, &SolverConfig::line_search(0.2, 1e-7), &e, &y).unwrap();
        assert_eq!(next.xi, x);
        for (a, b) in next.gamma.values().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn zero_data_converges_immediately() {
        let e = generate_ensemble(3, 3, 2, Distribution::Gaussian, 5).unwrap();
        let y = SnapshotSet::new(3, 2, vec![0.0; 6]).unwrap();
        let out = solve(&e, &y, &SolverConfig::fixed(1e-3, 0.1, 1e-9), None).unwrap();
        assert_eq!(out.stop_reason, StopReason::Converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn divergence_is_reported() {
        let e = generate_ensemble(4, 4, 2, Distribution::Gaussian, 8).unwrap();
        let x = SignalVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = sense(&e, &x, &GainVector::ones(4)).unwrap();
        let mut cfg = SolverConfig::fixed(1e3, 0.5, 1e-12);
        cfg.apply_c_rho_projection = false;
        cfg.max_iterations = 10_000;
        let err = solve(&e, &y, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }
}

//! Data-fidelity objective `f(xi, gamma) = (1/2mp) sum_l |diag(gamma) A_l xi - y_l|^2`,
//! its gradients and Hessian, and their closed-form expectations over the
//! sensing ensemble.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{self, project_zero_sum_in_place};
use crate::linalg;
use crate::model::{GainVector, GroundTruth, SensingEnsemble, SignalVector, SnapshotSet};

/// Largest `n + m` accepted by [`hessian`].
pub const MAX_HESSIAN_DIM: usize = 2048;

/// A point `(xi, gamma)` at which the objective is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationPoint {
    pub xi: SignalVector,
    pub gamma: GainVector,
}

impl EvaluationPoint {
    pub fn new(xi: SignalVector, gamma: GainVector) -> Self {
        Self { xi, gamma }
    }

    /// The ground-truth point `(x*, d*)`.
    pub fn at_truth(truth: &GroundTruth) -> Self {
        Self::new(truth.x().clone(), truth.d().clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub grad_xi: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    /// `grad_gamma` with its mean removed.
    pub grad_gamma_projected: Vec<f64>,
}

/// Per-snapshot forward images `z_l = A_l xi` and residuals
/// `r_l = gamma . z_l - y_l`, computed once and shared by the objective, both
/// gradients and the line searches.
#[derive(Debug, Clone)]
pub(crate) struct Residuals {
    m: usize,
    p: usize,
    pub(crate) z: Vec<f64>,
    pub(crate) r: Vec<f64>,
}

impl Residuals {
    pub(crate) fn compute(
        ensemble: &SensingEnsemble,
        y: &SnapshotSet,
        xi: &[f64],
        gamma: &[f64],
    ) -> Self {
        let (m, p) = (ensemble.m(), ensemble.p());
        let mut z = vec![0.0; m * p];
        for (l, zl) in z.chunks_exact_mut(m).enumerate() {
            ensemble.apply(l, xi, zl);
        }
        let mut res = Self {
            m,
            p,
            z,
            r: vec![0.0; m * p],
        };
        res.refresh_residual(y, gamma);
        res
    }

    /// Recomputes `r` from the cached `z` for new gains.
    pub(crate) fn refresh_residual(&mut self, y: &SnapshotSet, gamma: &[f64]) {
        let m = self.m;
        for (l, (rl, zl)) in self.r.chunks_exact_mut(m).zip(self.z.chunks_exact(m)).enumerate() {
            for (((ri, zi), gi), yi) in rl.iter_mut().zip(zl).zip(gamma).zip(y.snapshot(l)) {
                *ri = gi * zi - yi;
            }
        }
    }

    #[inline]
    pub(crate) fn z(&self, l: usize) -> &[f64] {
        &self.z[l * self.m..(l + 1) * self.m]
    }

    #[inline]
    pub(crate) fn r(&self, l: usize) -> &[f64] {
        &self.r[l * self.m..(l + 1) * self.m]
    }

    fn scale(&self) -> f64 {
        1.0 / (self.m * self.p) as f64
    }

    pub(crate) fn objective(&self) -> f64 {
        0.5 * self.scale() * linalg::pairwise_sum_by(self.p, &mut |l| linalg::norm_sq(self.r(l)))
    }

    pub(crate) fn grad_xi(&self, ensemble: &SensingEnsemble, gamma: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        let mut g = linalg::pairwise_sum_vec(self.p, ensemble.n(), &mut |l, acc| {
            for ((wi, gi), ri) in w.iter_mut().zip(gamma).zip(self.r(l)) {
                *wi = gi * ri;
            }
            ensemble.apply_transpose_acc(l, &w, acc);
        });
        linalg::scale(&mut g, self.scale());
        g
    }

    pub(crate) fn grad_gamma(&self) -> Vec<f64> {
        let mut g = linalg::pairwise_sum_vec(self.p, self.m, &mut |l, acc| {
            for ((a, zi), ri) in acc.iter_mut().zip(self.z(l)).zip(self.r(l)) {
                *a += zi * ri;
            }
        });
        linalg::scale(&mut g, self.scale());
        g
    }
}

fn check_inputs(ensemble: &SensingEnsemble, y: &SnapshotSet, point: &EvaluationPoint) -> Result<()> {
    ensemble.check_snapshots(y)?;
    ensemble.check_signal(point.xi.len())?;
    ensemble.check_gains(point.gamma.len())
}

/// `f(xi, gamma)`; always non-negative.
pub fn objective_value(
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
    point: &EvaluationPoint,
) -> Result<f64> {
    check_inputs(ensemble, y, point)?;
    Ok(Residuals::compute(ensemble, y, point.xi.values(), point.gamma.values()).objective())
}

/// Signal gradient, gain gradient and its projection onto zero-sum vectors.
pub fn gradients(
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
    point: &EvaluationPoint,
) -> Result<GradientPair> {
    check_inputs(ensemble, y, point)?;
    let res = Residuals::compute(ensemble, y, point.xi.values(), point.gamma.values());
    let grad_xi = res.grad_xi(ensemble, point.gamma.values());
    let grad_gamma = res.grad_gamma();
    let mut grad_gamma_projected = grad_gamma.clone();
    project_zero_sum_in_place(&mut grad_gamma_projected);
    Ok(GradientPair {
        grad_xi,
        grad_gamma,
        grad_gamma_projected,
    })
}

/// Dense Hessian in `(xi, gamma)` order, row-major `(n+m) x (n+m)`.
///
/// Blocks: `A^T diag(gamma)^2 A`, `A^T diag(2 gamma.A xi - y)` and
/// `diag((A xi)^2)`, each averaged over `mp`. Diagnostics only.
pub fn hessian(
    ensemble: &SensingEnsemble,
    y: &SnapshotSet,
    point: &EvaluationPoint,
) -> Result<Vec<f64>> {
    check_inputs(ensemble, y, point)?;
    let (n, m, p) = (ensemble.n(), ensemble.m(), ensemble.p());
    let dim = n + m;
    if dim > MAX_HESSIAN_DIM {
        return Err(Error::Parameter(alloc::format!(
            "dense Hessian limited to n + m <= {MAX_HESSIAN_DIM}, got {dim}"
        )));
    }
    let gamma = point.gamma.values();
    let res = Residuals::compute(ensemble, y, point.xi.values(), gamma);
    let mut h = linalg::pairwise_sum_vec(p, dim * dim, &mut |l, acc| {
        let zl = res.z(l);
        let yl = y.snapshot(l);
        for i in 0..m {
            let a = ensemble.row(l, i);
            let g2 = gamma[i] * gamma[i];
            for (r, &ar) in a.iter().enumerate() {
                let row = &mut acc[r * dim..r * dim + n];
                linalg::axpy(g2 * ar, a, row);
            }
            let cross = 2.0 * gamma[i] * zl[i] - yl[i];
            for (r, &ar) in a.iter().enumerate() {
                acc[r * dim + n + i] += ar * cross;
                acc[(n + i) * dim + r] += ar * cross;
            }
            acc[(n + i) * dim + n + i] += zl[i] * zl[i];
        }
    });
    linalg::scale(&mut h, 1.0 / (m * p) as f64);
    Ok(h)
}

/// `E f = (1/2m) |xi gamma^T - x* d*^T|_F^2`, i.e. half of `delta_f`.
pub fn expected_objective(point: &EvaluationPoint, truth: &GroundTruth) -> Result<f64> {
    Ok(0.5 * geometry::delta_f(point, truth)?)
}

/// Expectations of the three gradient blocks:
/// `(1/m)[|gamma|^2 xi - (gamma.d) x]`, `(1/m)[|xi|^2 gamma - (xi.x) d]` and
/// the zero-sum projection of the latter.
pub fn expected_gradients(point: &EvaluationPoint, truth: &GroundTruth) -> Result<GradientPair> {
    let (xi, gamma) = (point.xi.values(), point.gamma.values());
    let (x, d) = (truth.x().values(), truth.d().values());
    crate::error::check_dim("signal length", x.len(), xi.len())?;
    crate::error::check_dim("gain length", d.len(), gamma.len())?;
    let inv_m = 1.0 / d.len() as f64;
    let gg = linalg::norm_sq(gamma);
    let gd = linalg::dot(gamma, d);
    let xx = linalg::norm_sq(xi);
    let xd = linalg::dot(xi, x);
    let grad_xi = xi
        .iter()
        .zip(x)
        .map(|(a, b)| inv_m * (gg * a - gd * b))
        .collect();
    let grad_gamma: Vec<f64> = gamma
        .iter()
        .zip(d)
        .map(|(a, b)| inv_m * (xx * a - xd * b))
        .collect();
    let mut grad_gamma_projected = grad_gamma.clone();
    project_zero_sum_in_place(&mut grad_gamma_projected);
    Ok(GradientPair {
        grad_xi,
        grad_gamma,
        grad_gamma_projected,
    })
}

/// Expected Hessian `(1/m) [[|gamma|^2 I, 2 xi gamma^T - x d^T], [2 gamma xi^T - d x^T, |xi|^2 I]]`.
pub fn expected_hessian(point: &EvaluationPoint, truth: &GroundTruth) -> Result<Vec<f64>> {
    let (xi, gamma) = (point.xi.values(), point.gamma.values());
    let (x, d) = (truth.x().values(), truth.d().values());
    crate::error::check_dim("signal length", x.len(), xi.len())?;
    crate::error::check_dim("gain length", d.len(), gamma.len())?;
    let (n, m) = (x.len(), d.len());
    let dim = n + m;
    let inv_m = 1.0 / m as f64;
    let gg = linalg::norm_sq(gamma);
    let xx = linalg::norm_sq(xi);
    let mut h = vec![0.0; dim * dim];
    for r in 0..n {
        h[r * dim + r] = inv_m * gg;
        for c in 0..m {
            let v = inv_m * (2.0 * xi[r] * gamma[c] - x[r] * d[c]);
            h[r * dim + n + c] = v;
            h[(n + c) * dim + r] = v;
        }
    }
    for c in 0..m {
        h[(n + c) * dim + n + c] = inv_m * xx;
    }
    Ok(h)
}

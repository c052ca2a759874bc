//! Least-squares reconstruction that ignores the gains (`gamma = 1`).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{SensingEnsemble, SignalVector, SnapshotSet};

/// Target for `|A^T (y - A xi)| / |A^T y|`.
pub const LS_RELATIVE_RESIDUAL: f64 = 1e-10;

/// Minimiser of `f(xi, 1)` by conjugate gradients on the normal equations
/// (CGLS form, which never builds `A^T A`).
pub fn least_squares_baseline(ensemble: &SensingEnsemble, y: &SnapshotSet) -> Result<SignalVector> {
    ensemble.check_snapshots(y)?;
    let (n, m, p) = (ensemble.n(), ensemble.m(), ensemble.p());
    if m * p < n {
        return Err(Error::Singular { iterations: 0 });
    }

    let apply = |v: &[f64], out: &mut [f64]| {
        for (l, o) in out.chunks_exact_mut(m).enumerate() {
            ensemble.apply(l, v, o);
        }
    };
    let apply_t = |w: &[f64]| -> Vec<f64> {
        linalg::pairwise_sum_vec(p, n, &mut |l, acc| {
            ensemble.apply_transpose_acc(l, &w[l * m..(l + 1) * m], acc);
        })
    };

    let mut x = vec![0.0; n];
    let mut r = y.as_slice().to_vec();
    let mut s = apply_t(&r);
    let s0 = linalg::norm(&s);
    if s0 == 0.0 {
        return Ok(SignalVector::from_vec_unchecked(x));
    }
    let mut dir = s.clone();
    let mut gamma = linalg::norm_sq(&s);
    let mut q = vec![0.0; m * p];
    let max_iter = 10 * n + 100;
    for it in 1..=max_iter {
        apply(&dir, &mut q);
        let qq = linalg::norm_sq(&q);
        if qq <= 0.0 || !qq.is_finite() {
            return Err(Error::Singular { iterations: it });
        }
        let alpha = gamma / qq;
        linalg::axpy(alpha, &dir, &mut x);
        linalg::axpy(-alpha, &q, &mut r);
        s = apply_t(&r);
        let gamma_new = linalg::norm_sq(&s);
        if libm::sqrt(gamma_new) <= LS_RELATIVE_RESIDUAL * s0 {
            return Ok(SignalVector::from_vec_unchecked(x));
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (di, si) in dir.iter_mut().zip(&s) {
            *di = si + beta * *di;
        }
    }
    Err(Error::Singular {
        iterations: max_iter,
    })
}

//! Constraint sets and distances around the ground truth.
//!
//! `C_rho = {g : sum(g) = m, |g - 1|_inf <= rho}` is the feasible gain set;
//! `delta` and `delta_f` measure the distance of an iterate to `(x*, d*)`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::model::{GainVector, GroundTruth};
use crate::objective::EvaluationPoint;
use crate::seed::derive_seed;

/// Additive slack used for membership tests on closed sets.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

/// `v - mean(v) 1`, the orthogonal projection onto zero-sum vectors.
pub fn project_zero_sum(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_zero_sum_in_place(&mut out);
    out
}

pub fn project_zero_sum_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = linalg::pairwise_sum(v) / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Parameter(alloc::format!(
            "rho must lie in [0, 1), got {rho}"
        )))
    }
}

#[inline]
fn clip(v: f64, rho: f64) -> f64 {
    v.clamp(-rho, rho)
}

fn clipped_sum(z: &[f64], lambda: f64, rho: f64) -> f64 {
    z.iter().map(|&zi| clip(zi - lambda, rho)).sum()
}

/// Euclidean projection onto `C_rho`.
///
/// With `z = gamma - 1` the minimiser is `e_i = clip(z_i - lambda, -rho, rho)`
/// where `lambda` zeroes `sum(e)`. That sum is piecewise linear and
/// non-increasing in `lambda` with kinks at `z_i -/+ rho`, so the root is
/// bracketed by a binary search over the sorted kinks and then read off the
/// linear piece.
pub fn project_c_rho(gamma: &[f64], rho: f64) -> Result<GainVector> {
    check_rho(rho)?;
    if gamma.is_empty() {
        return Err(Error::param("gain vector must have at least one entry"));
    }
    if !linalg::is_finite(gamma) {
        return Err(Error::NonFinite("gains"));
    }
    let m = gamma.len();
    if rho == 0.0 {
        return Ok(GainVector::ones(m));
    }
    let z: Vec<f64> = gamma.iter().map(|g| g - 1.0).collect();

    let mut kinks: Vec<f64> = z.iter().flat_map(|&zi| [zi - rho, zi + rho]).collect();
    kinks.sort_by(f64::total_cmp);

    // g(kinks[0]) = m rho > 0 and g(kinks[last]) = -m rho < 0.
    let (mut lo, mut hi) = (0usize, kinks.len() - 1);
    let mut g_lo = clipped_sum(&z, kinks[lo], rho);
    let mut g_hi = clipped_sum(&z, kinks[hi], rho);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let g_mid = clipped_sum(&z, kinks[mid], rho);
        if g_mid >= 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    let (a, b) = (kinks[lo], kinks[hi]);
    let mut lambda = if g_lo == 0.0 {
        a
    } else if g_lo - g_hi > 0.0 {
        a + g_lo * (b - a) / (g_lo - g_hi)
    } else {
        a
    };

    let tol = 1e-12 * m as f64;
    if libm::fabs(clipped_sum(&z, lambda, rho)) > tol {
        // Rounding on the linear piece; tighten by bisection.
        let (mut l, mut r) = (a, b);
        for _ in 0..200 {
            lambda = 0.5 * (l + r);
            let g = clipped_sum(&z, lambda, rho);
            if libm::fabs(g) <= tol {
                break;
            }
            if g > 0.0 {
                l = lambda;
            } else {
                r = lambda;
            }
        }
    }

    let out = z.iter().map(|&zi| 1.0 + clip(zi - lambda, rho)).collect();
    Ok(GainVector::from_vec_unchecked(out))
}

/// Whether `gamma` lies in `C_rho` up to [`MEMBERSHIP_SLACK`].
pub fn in_c_rho(gamma: &[f64], rho: f64) -> bool {
    let m = gamma.len() as f64;
    let sum: f64 = linalg::pairwise_sum(gamma);
    libm::fabs(sum - m) <= MEMBERSHIP_SLACK * m.max(1.0)
        && gamma
            .iter()
            .all(|g| libm::fabs(g - 1.0) <= rho + MEMBERSHIP_SLACK)
}

/// `|xi - x*|^2 + (|x*|^2 / m) |gamma - d*|^2`
pub fn delta(point: &EvaluationPoint, truth: &GroundTruth) -> Result<f64> {
    check_point(point, truth)?;
    let xs = truth.x().values();
    let ds = truth.d().values();
    let m = ds.len() as f64;
    Ok(linalg::dist_sq(point.xi.values(), xs)
        + linalg::norm_sq(xs) / m * linalg::dist_sq(point.gamma.values(), ds))
}

/// `(1/m) |xi gamma^T - x* d*^T|_F^2`, summed entry by entry so it stays
/// accurate near zero.
pub fn delta_f(point: &EvaluationPoint, truth: &GroundTruth) -> Result<f64> {
    check_point(point, truth)?;
    let xs = truth.x().values();
    let ds = truth.d().values();
    let m = ds.len() as f64;
    let mut rows = Vec::with_capacity(xs.len());
    for (&xi, &xsi) in point.xi.values().iter().zip(xs) {
        let row: f64 = point
            .gamma
            .values()
            .iter()
            .zip(ds)
            .map(|(&g, &d)| {
                let r = xi * g - xsi * d;
                r * r
            })
            .sum();
        rows.push(row);
    }
    Ok(linalg::pairwise_sum(&rows) / m)
}

fn check_point(point: &EvaluationPoint, truth: &GroundTruth) -> Result<()> {
    check_dim("signal length", truth.x().len(), point.xi.len())?;
    check_dim("gain length", truth.d().len(), point.gamma.len())
}

/// Draws `d = 1 + omega` with `sum(omega) = 0` and `|omega|_inf = rho`.
///
/// `omega` is a uniform draw on `[-1, 1]^m`, projected onto zero-sum vectors
/// and rescaled to sup-norm `rho`. Any full-support law on the set would do.
pub fn draw_gain_perturbation(m: usize, rho: f64, seed: u64) -> Result<GainVector> {
    check_rho(rho)?;
    if m < 2 {
        return Err(Error::param(
            "gain perturbation needs m >= 2 (no zero-sum vector has unit sup-norm when m = 1)",
        ));
    }
    if rho == 0.0 {
        return Ok(GainVector::ones(m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[("gains", m as u64)]));
    loop {
        let mut omega: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
        project_zero_sum_in_place(&mut omega);
        let sup = linalg::norm_inf(&omega);
        if sup < 1e-12 {
            continue;
        }
        let s = rho / sup;
        return Ok(GainVector::from_vec_unchecked(
            omega.into_iter().map(|w| 1.0 + w * s).collect(),
        ));
    }
}

/// Parameters of the neighbourhood `D_{kappa,rho}` of `(x*, d*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighbourhoodSpec {
    kappa: f64,
    rho: f64,
    x_star_norm: f64,
}

impl NeighbourhoodSpec {
    pub fn new(kappa: f64, rho: f64, x_star_norm: f64) -> Result<Self> {
        check_rho(rho)?;
        if !(kappa >= 0.0 && x_star_norm >= 0.0) {
            return Err(Error::param("kappa and |x*| must be non-negative"));
        }
        Ok(Self {
            kappa,
            rho,
            x_star_norm,
        })
    }

    pub fn for_truth(kappa: f64, truth: &GroundTruth) -> Result<Self> {
        Self::new(kappa, truth.rho(), truth.x().norm())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn x_star_norm(&self) -> f64 {
        self.x_star_norm
    }
}

/// Closed-set membership in `D_{kappa,rho}`: `gamma` in `C_rho` and
/// `delta <= kappa^2 |x*|^2`, both with [`MEMBERSHIP_SLACK`].
pub fn in_neighbourhood(
    point: &EvaluationPoint,
    spec: &NeighbourhoodSpec,
    truth: &GroundTruth,
) -> Result<bool> {
    let dist = delta(point, truth)?;
    let radius = spec.kappa * spec.kappa * spec.x_star_norm * spec.x_star_norm;
    Ok(dist <= radius + MEMBERSHIP_SLACK && in_c_rho(point.gamma.values(), spec.rho))
}

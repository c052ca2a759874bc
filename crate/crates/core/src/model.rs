//! Ground-truth entities, random sensing ensembles and the forward model
//! `y_l = diag(d) A_l x`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::seed::derive_seed;

/// A length-`n` real signal (ground truth, iterate or estimate).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector(Vec<f64>);

impl SignalVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("signal must have at least one entry"));
        }
        if !linalg::is_finite(&values) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }
}

/// A length-`m` vector of multiplicative sensor gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector(Vec<f64>);

impl GainVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("gain vector must have at least one entry"));
        }
        if !linalg::is_finite(&values) {
            return Err(Error::NonFinite("gains"));
        }
        Ok(Self(values))
    }

    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&g| g > 0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|g| libm::fabs(*g)).sum()
    }

    /// `max_i |g_i - 1|`
    pub fn max_deviation(&self) -> f64 {
        self.0
            .iter()
            .fold(0.0, |acc, g| f64::max(acc, libm::fabs(g - 1.0)))
    }
}

/// Row distribution of the sensing matrices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Distribution {
    /// Entries i.i.d. standard normal.
    #[default]
    Gaussian,
    /// Entries i.i.d. uniform on `{-1, +1}`.
    Rademacher,
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Rademacher => "rademacher",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "rademacher" | "bernoulli" => Ok(Distribution::Rademacher),
            other => Err(Error::Parameter(alloc::format!(
                "unknown distribution `{other}` (expected gaussian or rademacher)"
            ))),
        }
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::Parameter(alloc::format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Fills `out` (row-major `m x n`) with the `l`-th sensing matrix of the
/// ensemble keyed by `seed`. Each snapshot has its own derived stream, so any
/// `A_l` can be regenerated without producing the others.
pub fn fill_snapshot_matrix(distribution: Distribution, seed: u64, l: usize, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[("snapshot", l as u64)]));
    match distribution {
        Distribution::Gaussian => {
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        Distribution::Rademacher => {
            for v in out.iter_mut() {
                *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
    }
}

/// `p` random `m x n` matrices with i.i.d. isotropic sub-Gaussian rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingEnsemble {
    n: usize,
    m: usize,
    p: usize,
    distribution: Option<Distribution>,
    seed: Option<u64>,
    /// `p` row-major `m x n` blocks.
    data: Vec<f64>,
}

impl SensingEnsemble {
    /// Wraps matrices loaded from elsewhere. No generation metadata is kept.
    pub fn from_matrices(n: usize, m: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        check_positive("n", n)?;
        check_positive("m", m)?;
        check_positive("p", p)?;
        check_dim("ensemble entries", n * m * p, data.len())?;
        if !linalg::is_finite(&data) {
            return Err(Error::NonFinite("sensing matrices"));
        }
        Ok(Self {
            n,
            m,
            p,
            distribution: None,
            seed: None,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn distribution(&self) -> Option<Distribution> {
        self.distribution
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Row-major `m x n` block of snapshot `l`.
    #[inline]
    pub fn matrix(&self, l: usize) -> &[f64] {
        let sz = self.m * self.n;
        &self.data[l * sz..(l + 1) * sz]
    }

    /// Row `a_{i,l}`.
    pub fn row(&self, l: usize, i: usize) -> &[f64] {
        let start = (l * self.m + i) * self.n;
        &self.data[start..start + self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `out = A_l v`
    #[inline]
    pub fn apply(&self, l: usize, v: &[f64], out: &mut [f64]) {
        linalg::matvec(self.matrix(l), self.n, v, out);
    }

    /// `out += A_l^T w`
    #[inline]
    pub fn apply_transpose_acc(&self, l: usize, w: &[f64], out: &mut [f64]) {
        linalg::matvec_t_acc(self.matrix(l), self.n, w, out);
    }

    pub(crate) fn check_signal(&self, len: usize) -> Result<()> {
        check_dim("signal length", self.n, len)
    }

    pub(crate) fn check_gains(&self, len: usize) -> Result<()> {
        check_dim("gain length", self.m, len)
    }

    pub(crate) fn check_snapshots(&self, y: &SnapshotSet) -> Result<()> {
        check_dim("snapshot length", self.m, y.m())?;
        check_dim("snapshot count", self.p, y.p())
    }
}

/// Draws the ensemble; deterministic in `(n, m, p, distribution, seed)`.
pub fn generate_ensemble(
    n: usize,
    m: usize,
    p: usize,
    distribution: Distribution,
    seed: u64,
) -> Result<SensingEnsemble> {
    check_positive("n", n)?;
    check_positive("m", m)?;
    check_positive("p", p)?;
    let sz = m * n;
    let mut data = vec![0.0; sz * p];
    for (l, block) in data.chunks_exact_mut(sz).enumerate() {
        fill_snapshot_matrix(distribution, seed, l, block);
    }
    Ok(SensingEnsemble {
        n,
        m,
        p,
        distribution: Some(distribution),
        seed: Some(seed),
        data,
    })
}

/// The `p` measurement vectors, stored as `p` consecutive length-`m` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    m: usize,
    p: usize,
    data: Vec<f64>,
}

impl SnapshotSet {
    pub fn new(m: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        check_positive("m", m)?;
        check_positive("p", p)?;
        check_dim("snapshot entries", m * p, data.len())?;
        if !linalg::is_finite(&data) {
            return Err(Error::NonFinite("snapshots"));
        }
        Ok(Self { m, p, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn snapshot(&self, l: usize) -> &[f64] {
        &self.data[l * self.m..(l + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `y_l = diag(d) A_l x` for every snapshot.
pub fn sense(ensemble: &SensingEnsemble, x: &SignalVector, d: &GainVector) -> Result<SnapshotSet> {
    ensemble.check_signal(x.len())?;
    ensemble.check_gains(d.len())?;
    let (m, p) = (ensemble.m(), ensemble.p());
    let mut data = vec![0.0; m * p];
    for (l, y) in data.chunks_exact_mut(m).enumerate() {
        ensemble.apply(l, x.values(), y);
        for (yi, di) in y.iter_mut().zip(d.values()) {
            *yi *= di;
        }
    }
    Ok(SnapshotSet { m, p, data })
}

/// The global minimiser `(x*, d*)` singled out by `sum(d*) = m`, with the
/// gain deviation bound `rho >= max_i |d*_i - 1|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    x: SignalVector,
    d: GainVector,
    rho: f64,
}

impl GroundTruth {
    /// Rescales an arbitrary positive `(x, d)` onto the simplex
    /// representative `((|d|_1/m) x, (m/|d|_1) d)` and takes the tightest
    /// `rho`.
    pub fn new(x: SignalVector, d: GainVector) -> Result<Self> {
        let (x, d) = Self::rescale(x, d)?;
        let rho = d.max_deviation();
        Self::validate(x, d, rho)
    }

    /// Like [`GroundTruth::new`] but with an explicit (looser) `rho`.
    pub fn with_rho(x: SignalVector, d: GainVector, rho: f64) -> Result<Self> {
        let (x, d) = Self::rescale(x, d)?;
        Self::validate(x, d, rho)
    }

    fn rescale(x: SignalVector, d: GainVector) -> Result<(SignalVector, GainVector)> {
        if !d.is_positive() {
            return Err(Error::param("ground-truth gains must be strictly positive"));
        }
        let m = d.len() as f64;
        let l1 = d.l1_norm();
        let alpha = m / l1;
        let x = SignalVector(x.0.into_iter().map(|v| v / alpha).collect());
        let d = GainVector(d.0.into_iter().map(|v| v * alpha).collect());
        Ok((x, d))
    }

    fn validate(x: SignalVector, d: GainVector, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Parameter(alloc::format!(
                "rho must lie in [0, 1), got {rho}"
            )));
        }
        let dev = d.max_deviation();
        if dev > rho + 1e-12 {
            return Err(Error::Parameter(alloc::format!(
                "gain deviation {dev} exceeds rho = {rho}"
            )));
        }
        Ok(Self { x, d, rho })
    }

    pub fn x(&self) -> &SignalVector {
        &self.x
    }

    pub fn d(&self) -> &GainVector {
        &self.d
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `max{|d_hat - d*|/|d*|, |x_hat - x*|/|x*|}`
    pub fn max_relative_error(&self, x_hat: &[f64], d_hat: &[f64]) -> f64 {
        let ex = libm::sqrt(linalg::dist_sq(x_hat, self.x.values())) / self.x.norm();
        let ed = libm::sqrt(linalg::dist_sq(d_hat, self.d.values())) / linalg::norm(self.d.values());
        f64::max(ex, ed)
    }
}

/// Uniform draw from the unit Euclidean ball: Gaussian direction with
/// radius `u^(1/n)`.
pub fn draw_unit_ball_signal(n: usize, seed: u64) -> Result<SignalVector> {
    check_positive("n", n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[("unit-ball", n as u64)]));
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = linalg::norm(&v);
        if nrm < 1e-12 {
            continue;
        }
        let u: f64 = rng.random();
        let radius = libm::pow(u, 1.0 / n as f64);
        linalg::scale(&mut v, radius / nrm);
        return Ok(SignalVector(v));
    }
}

#![allow(dead_code)]

use blindcal_core::geometry::draw_gain_perturbation;
use blindcal_core::model::{draw_unit_ball_signal, generate_ensemble, sense};
use blindcal_core::objective::EvaluationPoint;
use blindcal_core::{Distribution, GainVector, GroundTruth, SensingEnsemble, SignalVector, SnapshotSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub ensemble: SensingEnsemble,
    pub y: SnapshotSet,
    pub truth: GroundTruth,
}

pub fn instance(n: usize, m: usize, p: usize, rho: f64, seed: u64) -> Instance {
    let x = draw_unit_ball_signal(n, seed).unwrap();
    let d = draw_gain_perturbation(m, rho, seed).unwrap();
    let ensemble = generate_ensemble(n, m, p, Distribution::Gaussian, seed).unwrap();
    let y = sense(&ensemble, &x, &d).unwrap();
    let truth = GroundTruth::with_rho(x, d, rho).unwrap();
    Instance { ensemble, y, truth }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn point(xi: Vec<f64>, gamma: Vec<f64>) -> EvaluationPoint {
    EvaluationPoint::new(SignalVector::new(xi).unwrap(), GainVector::new(gamma).unwrap())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

//! Monte-Carlo checks that the finite-sample quantities are unbiased for the
//! closed-form expectations.

mod common;

use blindcal_core::geometry;
use blindcal_core::model::{generate_ensemble, sense};
use blindcal_core::objective::{expected_objective, objective_value};
use blindcal_core::{Distribution, GainVector, GroundTruth, SignalVector};
use common::*;

fn fixed_truth_and_point(n: usize, m: usize) -> (GroundTruth, blindcal_core::EvaluationPoint) {
    let mut r = rng(2024);
    let x = SignalVector::new(gaussian_vec(&mut r, n)).unwrap();
    let d = geometry::draw_gain_perturbation(m, 0.3, 1).unwrap();
    let truth = GroundTruth::new(x, d).unwrap();
    let xi = gaussian_vec(&mut r, n);
    let gamma = geometry::project_c_rho(&uniform_vec(&mut r, m, 0.6, 1.4), 0.4).unwrap();
    (truth, point(xi, gamma.into_inner()))
}

fn objective_sample(truth: &GroundTruth, pt: &blindcal_core::EvaluationPoint, p: usize, seed: u64) -> f64 {
    let e = generate_ensemble(truth.x().len(), truth.d().len(), p, Distribution::Gaussian, seed).unwrap();
    let y = sense(&e, truth.x(), truth.d()).unwrap();
    objective_value(&e, &y, pt).unwrap()
}

#[test]
fn objective_mean_matches_expectation() {
    let (truth, pt) = fixed_truth_and_point(10, 16);
    let trials = 200;
    let mean: f64 = (0..trials).map(|s| objective_sample(&truth, &pt, 8, 5000 + s)).sum::<f64>()
        / trials as f64;
    let want = expected_objective(&pt, &truth).unwrap();
    assert!(((mean - want) / want).abs() <= 0.05, "mean {mean}, expected {want}");
}

#[test]
fn expected_objective_is_half_delta_f() {
    let (truth, pt) = fixed_truth_and_point(9, 7);
    let e = expected_objective(&pt, &truth).unwrap();
    let df = geometry::delta_f(&pt, &truth).unwrap();
    assert!((2.0 * e - df).abs() <= 1e-12 * df);
}

#[test]
fn monte_carlo_error_decays_at_root_n() {
    // RMS error of the Monte-Carlo mean over independent replicates, at
    // trial counts spanning two decades.
    let (truth, pt) = fixed_truth_and_point(6, 4);
    let want = expected_objective(&pt, &truth).unwrap();
    let counts = [10usize, 32, 100, 316, 1000];
    let replicates = 24;
    let mut seed = 0u64;
    let mut pts = Vec::new();
    for &count in &counts {
        let mut sq = 0.0;
        for _ in 0..replicates {
            let mut acc = 0.0;
            for _ in 0..count {
                acc += objective_sample(&truth, &pt, 2, seed);
                seed += 1;
            }
            let err = acc / count as f64 - want;
            sq += err * err;
        }
        let rms = (sq / replicates as f64).sqrt();
        pts.push(((count as f64).ln(), rms.ln()));
    }
    let slope = ls_slope(&pts);
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn unit_gains_have_zero_expected_gain_gradient_projection() {
    let n = 5;
    let x = SignalVector::new(vec![1.0; n]).unwrap();
    let truth = GroundTruth::new(x.clone(), GainVector::ones(4)).unwrap();
    let pt = point(vec![0.5; n], vec![1.0; 4]);
    let g = blindcal_core::objective::expected_gradients(&pt, &truth).unwrap();
    assert!(g.grad_gamma_projected.iter().all(|v| v.abs() < 1e-15));
}

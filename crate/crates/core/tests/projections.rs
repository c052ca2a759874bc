//! Projections onto the zero-sum subspace and onto the gain set, against an
//! exhaustive face-enumeration oracle.

mod common;

use blindcal_core::geometry::{
    delta, delta_f, draw_gain_perturbation, in_c_rho, project_c_rho, project_zero_sum,
};
use blindcal_core::{GainVector, GroundTruth, SignalVector};
use common::*;
use proptest::prelude::*;

/// Minimiser of `|u - w|^2` over `sum u = 0, |u_i| <= rho`, found by trying
/// every assignment of coordinates to {lower bound, free, upper bound}.
fn face_oracle(w: &[f64], rho: f64) -> Vec<f64> {
    let m = w.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let mut pattern = vec![0i8; m];
        for slot in pattern.iter_mut() {
            *slot = (c % 3) as i8 - 1;
            c /= 3;
        }
        let free: Vec<usize> = (0..m).filter(|&i| pattern[i] == 0).collect();
        let clipped_sum: f64 = pattern.iter().map(|&s| s as f64 * rho).sum();
        let mut u = vec![0.0; m];
        for i in 0..m {
            u[i] = pattern[i] as f64 * rho;
        }
        if free.is_empty() {
            if clipped_sum.abs() > 1e-12 {
                continue;
            }
        } else {
            let lambda = (free.iter().map(|&i| w[i]).sum::<f64>() + clipped_sum) / free.len() as f64;
            for &i in &free {
                u[i] = w[i] - lambda;
            }
        }
        if u.iter().any(|v| v.abs() > rho + 1e-12) {
            continue;
        }
        let dist: f64 = u.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, u));
        }
    }
    best.expect("feasible set is non-empty").1
}

#[test]
fn matches_exhaustive_oracle() {
    let mut r = rng(11);
    for m in 2..=8 {
        for rho in [0.05, 0.3, 0.7, 0.99] {
            for _ in 0..6 {
                let gamma: Vec<f64> = gaussian_vec(&mut r, m).iter().map(|v| 1.0 + 0.8 * v).collect();
                let got = project_c_rho(&gamma, rho).unwrap();
                let w: Vec<f64> = gamma.iter().map(|g| g - 1.0).collect();
                let want = face_oracle(&w, rho);
                for (g, u) in got.values().iter().zip(&want) {
                    assert!((g - 1.0 - u).abs() <= 1e-10, "m={m} rho={rho}: {got:?} vs {want:?}");
                }
            }
        }
    }
}

#[test]
fn zero_radius_collapses_to_ones() {
    let got = project_c_rho(&[3.0, -1.0, 0.5], 0.0).unwrap();
    assert_eq!(got.values(), &[1.0, 1.0, 1.0]);
}

#[test]
fn rejects_radius_outside_unit_interval() {
    assert!(project_c_rho(&[1.0, 1.0], 1.0).is_err());
    assert!(project_c_rho(&[1.0, 1.0], -0.1).is_err());
}

fn gains(m: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    m.prop_flat_map(|m| prop::collection::vec(-1.0f64..3.0, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_feasible_and_idempotent(g in gains(2..40), rho in 0.01f64..0.99) {
        let p = project_c_rho(&g, rho).unwrap();
        prop_assert!(in_c_rho(p.values(), rho));
        let again = project_c_rho(p.values(), rho).unwrap();
        for (a, b) in again.values().iter().zip(p.values()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn projection_is_non_expansive(
        m in 2usize..30,
        seed in any::<u64>(),
        rho in 0.01f64..0.99,
    ) {
        let mut r = rng(seed);
        let a: Vec<f64> = gaussian_vec(&mut r, m).iter().map(|v| 1.0 + v).collect();
        let b: Vec<f64> = gaussian_vec(&mut r, m).iter().map(|v| 1.0 + v).collect();
        let pa = project_c_rho(&a, rho).unwrap();
        let pb = project_c_rho(&b, rho).unwrap();
        let before: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let after: f64 = pa.values().iter().zip(pb.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(after <= before * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn zero_sum_projection_is_idempotent_and_self_adjoint(
        m in 1usize..50,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let u = gaussian_vec(&mut r, m);
        let v = gaussian_vec(&mut r, m);
        let pu = project_zero_sum(&u);
        let ppu = project_zero_sum(&pu);
        for (a, b) in pu.iter().zip(&ppu) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(pu.iter().sum::<f64>().abs() <= 1e-12 * m as f64);
        let pv = project_zero_sum(&v);
        let lhs: f64 = pu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&pv).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn drawn_gains_are_normalised(m in 2usize..64, rho in 0.0f64..0.99, seed in any::<u64>()) {
        let d = draw_gain_perturbation(m, rho, seed).unwrap();
        prop_assert!((d.values().iter().sum::<f64>() - m as f64).abs() <= 1e-9);
        prop_assert!(d.max_deviation() <= rho + 1e-12);
        if rho > 0.0 {
            prop_assert!((d.max_deviation() - rho).abs() <= 1e-12);
        }
    }
}

#[test]
fn sandwich_bound_holds_on_random_points() {
    let (n, m) = (12, 10);
    let mut r = rng(77);
    for rho in [0.1, 0.5, 0.9] {
        let x = SignalVector::new(gaussian_vec(&mut r, n)).unwrap();
        let d = draw_gain_perturbation(m, rho, 3).unwrap();
        let truth = GroundTruth::with_rho(x, d, rho).unwrap();
        for k in 0..1000 {
            let scale = [0.01, 0.3, 3.0][k % 3];
            let xi: Vec<f64> = gaussian_vec(&mut r, n).iter().map(|v| scale * v).collect();
            let raw: Vec<f64> = gaussian_vec(&mut r, m).iter().map(|v| 1.0 + v).collect();
            let gamma = project_c_rho(&raw, rho).unwrap();
            let pt = point(xi, gamma.into_inner());
            let dl = delta(&pt, &truth).unwrap();
            let df = delta_f(&pt, &truth).unwrap();
            assert!((1.0 - rho) * dl <= df * (1.0 + 1e-12), "rho={rho} k={k}");
            assert!(df <= (1.0 + 2.0 * rho) * dl * (1.0 + 1e-12), "rho={rho} k={k}");
        }
    }
}

#[test]
fn distances_vanish_at_truth_and_are_positive_elsewhere() {
    let x = SignalVector::new(vec![1.0, 2.0]).unwrap();
    let truth = GroundTruth::new(x, GainVector::new(vec![1.2, 0.8]).unwrap()).unwrap();
    let at = blindcal_core::EvaluationPoint::at_truth(&truth);
    assert_eq!(delta(&at, &truth).unwrap(), 0.0);
    assert_eq!(delta_f(&at, &truth).unwrap(), 0.0);
    let off = point(vec![1.0, 2.1], vec![1.2, 0.8]);
    assert!(delta(&off, &truth).unwrap() > 0.0);
    assert!(delta_f(&off, &truth).unwrap() > 0.0);
}

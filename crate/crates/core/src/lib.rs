//! Blind calibration of multiplicative sensor gains.
//!
//! A signal `x` is observed through `p` snapshots `y_l = diag(d) A_l x`, each
//! taken with a fresh random sensing matrix `A_l` and the same unknown,
//! positive gains `d`. This crate recovers `(x, d)` jointly (up to the
//! scaling fixed by `sum(d) = m`) with projected gradient descent started from
//! the back-projection estimate.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, experiments
//! and the command-line front end live in the `blindcal` crate.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod seed;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Distribution, GainVector, GroundTruth, SensingEnsemble, SignalVector, SnapshotSet};
pub use objective::{EvaluationPoint, GradientPair};
pub use seed::derive_seed;
pub use solver::{SolveOutcome, SolverConfig, SolverState, SolverTrace, StepMode, StopReason};

/// Relative error in decibels, `20 log10(r)`.
pub fn to_db(ratio: f64) -> f64 {
    20.0 * libm::log10(ratio)
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    libm::pow(10.0, db / 20.0)
}

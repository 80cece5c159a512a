//! Decorrelated regression adjustment for average-treatment-effect
//! estimation in finite-population randomized experiments.
//!
//! The crate is organised bottom-up:
//!
//! * [`decorrelation`] draws treatment assignments and the independent
//!   fitting/averaging indicator quadruple.
//! * [`population`] holds the ground truth (both potential outcomes).
//! * [`regressors`] fits outcome models on a subset and predicts everywhere.
//! * [`estimators`] turns observed outcomes and fits into point estimates,
//!   variance estimates and intervals.
//! * [`diagnostics`] evaluates the theoretical bounds and fixed points.
//! * [`simharness`] runs seeded Monte Carlo studies.

pub mod decorrelation;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod normal;
pub mod population;
pub mod regressors;
pub mod rng;
pub mod simharness;

pub use error::{Error, Result};

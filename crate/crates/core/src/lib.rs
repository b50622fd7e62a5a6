//! Assumption-lean inference for ordinary least squares.
//!
//! The estimator is always read as an estimate of its own population target
//! `β_n = Σ_n⁻¹ Γ_n`, whatever the true regression function looks like.
//! Around that target the crate provides sandwich variance estimates, the
//! multiplier and m-of-n resampling score bootstraps, conservative t and
//! max-|t| tests, exact diagnostics for the deterministic perturbation bound of
//! the least squares solve, and a Monte Carlo lab with known population targets.

// comparisons are negated on purpose so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod ols;
pub mod rng;
pub mod simlab;
pub mod testing;
pub mod variance;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use ols::{fit_ols, Dataset, OlsFit};

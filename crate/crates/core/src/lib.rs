//! Spectral-Galerkin simulation of the fractional stochastic Burgers equation
//! on (0, 1) with Dirichlet conditions, with Monte Carlo and analytic tools for
//! studying its invariant measure.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod bounds;
pub mod dynamics;
pub mod ensemble;
pub mod ergodicity;
pub mod harness;
pub mod error;
pub mod noise;
pub mod spectral;

pub use error::{Error, Result};

//! Heteroskedastic adaptive regularization for one-dimensional problems.
//!
//! The crate covers the full experimental loop:
//!
//! - [`domain`]: ground-truth problems (logistic or Gaussian-noise regression),
//!   Fisher information, and seeded dataset sampling.
//! - [`regprofile`]: regularization profiles, from uniform to the curvature-aware
//!   optimum, plus per-example importance weights.
//! - [`theory`]: the asymptotic mean-squared-error functional evaluated by quadrature.
//! - [`gridfit`]: a damped-Newton solver for the penalized likelihood on a uniform grid.
//! - [`mlp`]: a small tanh/ReLU network trained with a per-example loss-Jacobian penalty.
//! - [`harness`]: Monte-Carlo MSE estimation, profile comparisons, and the two-stage
//!   adaptive pipeline (pilot fit, estimate density and uncertainty, refit).
//! - [`cli`]: the `heteroreg` command-line front end.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod domain;
pub mod error;
pub mod gridfit;
pub mod harness;
pub mod loss;
pub mod mlp;
pub mod quad;
pub mod regprofile;
pub mod theory;

pub use error::{Error, Result};

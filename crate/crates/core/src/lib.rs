//! Kernel regression for functional data and the large-deviation rates of
//! its estimator.
//!
//! - [`funcdata`]: curves, quadrature, semi-metrics, kernels.
//! - [`estimator`]: the l-indexed Nadaraya-Watson estimator.
//! - [`ratefn`]: limiting log-Laplace transform, conjugates, contraction, `β` and `ρ`.
//! - [`simulate`]: the Gaussian functional regression model and Monte-Carlo ladders.
//! - [`covering`]: greedy covers of curve classes and entropy diagnostics.

pub mod covering;
pub mod error;
pub mod estimator;
pub mod funcdata;
pub mod numeric;
pub mod ratefn;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};

//! Weak-form estimation of ODE parameters with uncertainty quantification.
//!
//! Benchmark systems live in [`models`], synthetic data comes from
//! [`simulate`] and [`noise`], the regression system from [`weakform`], the
//! estimator itself from [`estimator`], and Monte Carlo coverage studies from
//! [`harness`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod simulate;
pub mod weakform;

pub use error::{Result, WendyError};
pub use estimator::{fit, EstimatorConfig, FitReport, WendyFit};
pub use models::{get_benchmark, Benchmark, ModelSpec};
pub use noise::{add_noise, NoiseConfig, NoiseKind};
pub use simulate::StateGrid;

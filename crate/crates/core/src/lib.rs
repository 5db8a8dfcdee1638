//! Supervised anomaly detection with a masked autoregressive density
//! estimator.
//!
//! A MADE-style network models `p(x)` as a product of per-attribute
//! conditionals (Gaussian mixtures, or Bernoulli for all-binary data). It is
//! trained to maximize the likelihood of normal instances while a pairwise
//! sigmoid term pushes labeled anomalies below normals in likelihood.
//! Instances are scored by `-log p(x)`.

// Validation uses `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod made;
pub mod math;
pub mod objective;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

//! Desk-scale multiple-instance-learning benchmark: the Shifted Mean
//! synthetic data process, its closed-form Bayes-optimal scorer, five
//! pooling operators with verified analytic gradients under both
//! architectural orderings, the SGD training protocol with the
//! validation-constrained checkpoint rule, and rank-based metrics.
//!
//! The numeric kernels are generic over the scalar type through
//! [`scalar::Scalar`]; the experiment pipeline (data generation, Bayes
//! scoring, training, file formats) is pinned to `f64` via the aliases
//! below, since the on-disk formats and reproducibility fixtures are
//! specified in 64-bit floats.

pub mod bayes;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pooling;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense `f64` matrix, the working type of the experiment pipeline.
pub type Mat = numerics::matrix::Matrix<f64>;
/// Single-precision matrix, available where memory outweighs precision.
pub type Mat32 = numerics::matrix::Matrix<f32>;
/// Pooling output over `f64`.
pub type PoolResult = pooling::PoolResult<f64>;

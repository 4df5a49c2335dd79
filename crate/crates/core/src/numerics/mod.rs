//! Deterministic dense linear algebra, seeded sampling, and numeric
//! utilities shared by every other module.

pub mod gradcheck;
pub mod matrix;
pub mod rng;
pub mod stats;
pub mod tridiag;

pub use gradcheck::{directional_diff, finite_diff_gradient, gradients_close};
pub use matrix::{axpy, dot, Matrix};
pub use rng::{gaussian_sample, SeededRng};
pub use stats::{log_gaussian_pdf, log_sum_exp};
pub use tridiag::{tridiag_solve, BandedCholesky, SymmetricBanded, Tridiagonal, TridiagFactor};

//! Scalar abstraction for the numeric kernels.
//!
//! The linear algebra, pooling, and metric kernels are generic over the
//! floating-point type; the experiment pipeline pins everything to `f64`
//! through the aliases at the crate root (file formats and the RNG golden
//! fixture are specified in 64-bit floats).

use std::fmt::{Debug, Display};

/// Floating-point scalar usable in every numeric kernel.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Copy
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used at the boundary with the RNG and
    /// with configuration values (which are always `f64`).
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Scalar")
    }

    /// Widening conversion to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

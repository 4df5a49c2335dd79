//! Log-space probability helpers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Natural log of the Gaussian density `N(x | mean, std²)`.
pub fn log_gaussian_pdf<T: Scalar>(x: T, mean: T, std: T) -> Result<T> {
    if !(std > T::zero()) {
        return Err(Error::invalid(format!(
            "log_gaussian_pdf requires std > 0, got {std}"
        )));
    }
    let half = T::from_f64_lossy(0.5);
    let ln_2pi = T::from_f64_lossy(2.0 * std::f64::consts::PI).ln();
    let z = (x - mean) / std;
    Ok(-half * ln_2pi - std.ln() - half * z * z)
}

/// `ln Σ exp(vᵢ)` with the max-shift trick; exact for a single element.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput("log_sum_exp"));
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let max = values.iter().cloned().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        // All -inf (or a +inf/NaN slipped in): the shift is meaningless.
        return Ok(max);
    }
    let sum = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    Ok(max + sum.ln())
}

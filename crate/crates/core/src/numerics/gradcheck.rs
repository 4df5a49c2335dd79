//! Finite-difference gradient oracle.
//!
//! Used only to verify analytic gradients; never on the training path.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_gradient<T, F>(mut f: F, x: &[T], eps: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(eps > T::zero()) {
        return Err(Error::invalid(format!(
            "finite_diff_gradient requires eps > 0, got {eps}"
        )));
    }
    let two = T::from_f64_lossy(2.0);
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let plus = f(&point);
        point[i] = orig - eps;
        let minus = f(&point);
        point[i] = orig;
        grad.push((plus - minus) / (two * eps));
    }
    Ok(grad)
}

/// Central-difference directional derivative of `f` at `x` along `dir`.
pub fn directional_diff<T, F>(mut f: F, x: &[T], dir: &[T], eps: T) -> T
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    debug_assert_eq!(x.len(), dir.len());
    let two = T::from_f64_lossy(2.0);
    let plus: Vec<T> = x.iter().zip(dir).map(|(&a, &d)| a + eps * d).collect();
    let minus: Vec<T> = x.iter().zip(dir).map(|(&a, &d)| a - eps * d).collect();
    (f(&plus) - f(&minus)) / (two * eps)
}

/// True when `analytic` and `numeric` agree to `rel_tol` relative error,
/// with an absolute floor for gradients that are essentially zero.
pub fn gradients_close<T: Scalar>(analytic: T, numeric: T, rel_tol: T) -> bool {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    diff <= rel_tol * scale || diff <= T::from_f64_lossy(1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let g = finite_diff_gradient(|x: &[f64]| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff_gradient(|_: &[f64]| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_of_squares_gradient_is_two_x() {
        let x = [0.3, -1.7, 2.2, 0.01];
        let g = finite_diff_gradient(|x: &[f64]| x.iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-6 * (1.0 + xi.abs()));
        }
    }

    #[test]
    fn rejects_nonpositive_eps() {
        assert!(finite_diff_gradient(|x: &[f64]| x[0], &[1.0], 0.0).is_err());
    }
}

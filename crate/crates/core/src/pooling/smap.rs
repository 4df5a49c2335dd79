//! Smooth attention pooling: embeddings are replaced by the minimizer of a
//! Dirichlet-energy-regularized proximity objective before attention.
//!
//! With chain adjacency `A` and its combinatorial Laplacian `L`, the
//! smoothed bag `G` is the unique solution of the positive-definite system
//! `((1-α)·I + α·L) G = (1-α) H`, solved exactly: Thomas algorithm for the
//! 1-neighbor chain, banded Cholesky for wider neighborhoods.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::tridiag::{SymmetricBanded, Tridiagonal, TridiagFactor};
use crate::pooling::abmil::{abmil_backward, abmil_pool, AbmilParams};
use crate::pooling::{PoolResult, PoolUpstream};
use crate::scalar::Scalar;

/// Smoothing strength, neighborhood width, and the inner attention
/// parameters. Only `inner` is trainable.
#[derive(Clone, Debug)]
pub struct SmapConfig<T: Scalar> {
    /// Smoothing strength in `[0, 1)`.
    pub alpha: T,
    /// Chain neighbors per side (1 links each instance to its adjacent
    /// instances in scan order).
    pub n_neighbors: usize,
    pub inner: AbmilParams<T>,
}

impl<T: Scalar> SmapConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return Err(Error::invalid(format!(
                "alpha must be in [0,1): {}",
                self.alpha
            )));
        }
        if self.n_neighbors == 0 {
            return Err(Error::invalid("n_neighbors must be at least 1"));
        }
        Ok(())
    }
}

enum SmoothFactor<T: Scalar> {
    Tridiag(TridiagFactor<T>),
    Banded(crate::numerics::tridiag::BandedCholesky<T>),
}

impl<T: Scalar> SmoothFactor<T> {
    fn solve(&self, rhs: &Matrix<T>) -> Matrix<T> {
        match self {
            SmoothFactor::Tridiag(f) => f.solve(rhs),
            SmoothFactor::Banded(f) => f.solve(rhs),
        }
    }
}

/// Factorizes `(1-α)·I + α·L` for a chain of `n` instances.
fn smoothing_factor<T: Scalar>(n: usize, alpha: T, n_neighbors: usize) -> Result<SmoothFactor<T>> {
    let degree = |i: usize| {
        let left = i.min(n_neighbors);
        let right = (n - 1 - i).min(n_neighbors);
        T::from_f64_lossy((left + right) as f64)
    };
    let one = T::one();
    if n_neighbors == 1 {
        let diag: Vec<T> = (0..n).map(|i| (one - alpha) + alpha * degree(i)).collect();
        let off = vec![-alpha; n.saturating_sub(1)];
        let sys = Tridiagonal::new(off.clone(), diag, off)?;
        Ok(SmoothFactor::Tridiag(sys.factorize()?))
    } else {
        let banded = SymmetricBanded::from_fn(n, n_neighbors.min(n - 1), |i, j| {
            if i == j {
                (one - alpha) + alpha * degree(i)
            } else {
                -alpha
            }
        });
        Ok(SmoothFactor::Banded(banded.cholesky()?))
    }
}

/// Solves the smoothing objective exactly. `alpha = 0` returns the input
/// unchanged.
pub fn smap_smooth<T: Scalar>(h: &Matrix<T>, alpha: T, n_neighbors: usize) -> Result<Matrix<T>> {
    if h.rows() == 0 {
        return Err(Error::EmptyInput("smap bag"));
    }
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::invalid(format!("alpha must be in [0,1): {alpha}")));
    }
    if alpha == T::zero() || h.rows() == 1 {
        return Ok(h.clone());
    }
    let factor = smoothing_factor(h.rows(), alpha, n_neighbors)?;
    let mut rhs = h.clone();
    let scale = T::one() - alpha;
    for v in rhs.data_mut() {
        *v *= scale;
    }
    Ok(factor.solve(&rhs))
}

/// Attention pooling over the smoothed embeddings.
pub fn smap_pool<T: Scalar>(h: &Matrix<T>, cfg: &SmapConfig<T>) -> Result<PoolResult<T>> {
    cfg.validate()?;
    let smoothed = smap_smooth(h, cfg.alpha, cfg.n_neighbors)?;
    abmil_pool(&smoothed, &cfg.inner)
}

/// Backward pass: attention backward on the smoothed bag, then the adjoint
/// of the linear solve (the system is symmetric, so the adjoint reuses the
/// same factorization).
pub(crate) fn smap_backward<T: Scalar>(
    h: &Matrix<T>,
    cfg: &SmapConfig<T>,
    upstream: &PoolUpstream<T>,
    inner_grads: &mut AbmilParams<T>,
) -> Result<Matrix<T>> {
    cfg.validate()?;
    let smoothed = smap_smooth(h, cfg.alpha, cfg.n_neighbors)?;
    let grad_smoothed = abmil_backward(&smoothed, &cfg.inner, upstream, inner_grads)?;
    if cfg.alpha == T::zero() || h.rows() == 1 {
        return Ok(grad_smoothed);
    }
    let factor = smoothing_factor(h.rows(), cfg.alpha, cfg.n_neighbors)?;
    let mut grad_h = factor.solve(&grad_smoothed);
    let scale = T::one() - cfg.alpha;
    for v in grad_h.data_mut() {
        *v *= scale;
    }
    Ok(grad_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_gradient, gradients_close};
    use crate::numerics::matrix::dot;
    use crate::numerics::rng::SeededRng;
    use crate::Mat;

    fn random_bag(s: usize, m: usize, rng: &mut SeededRng) -> Mat {
        Mat::from_fn(s, m, |_, _| rng.standard_normal())
    }

    fn chain_laplacian(n: usize, w: usize) -> Mat {
        Mat::from_fn(n, n, |i, j| {
            let d = i.abs_diff(j);
            if i == j {
                let deg = i.min(w) + (n - 1 - i).min(w);
                deg as f64
            } else if d >= 1 && d <= w {
                -1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn alpha_zero_is_bit_exact_identity() {
        let mut rng = SeededRng::new(1, 0);
        let h = random_bag(7, 5, &mut rng);
        let g = smap_smooth(&h, 0.0, 1).unwrap();
        assert_eq!(g.data(), h.data());
    }

    #[test]
    fn constant_bag_is_fixed_point() {
        let h = Mat::from_fn(6, 3, |_, c| c as f64 - 1.0);
        for alpha in [0.1, 0.5, 0.9] {
            let g = smap_smooth(&h, alpha, 1).unwrap();
            for (a, b) in g.data().iter().zip(h.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn worked_three_instance_case() {
        let h = Mat::from_vec(3, 1, vec![0.0, 3.0, 0.0]).unwrap();
        let g = smap_smooth(&h, 0.5, 1).unwrap();
        for (a, b) in g.data().iter().zip(&[0.75, 1.5, 0.75]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn solver_residual_is_tiny() {
        let mut rng = SeededRng::new(2, 0);
        for &alpha in &[0.1, 0.5, 0.9] {
            for &w in &[1usize, 2, 3] {
                let s = 4 + rng.uniform_below(20) as usize;
                let h = random_bag(s, 6, &mut rng);
                let g = smap_smooth(&h, alpha, w).unwrap();
                let lap = chain_laplacian(s, w);
                // residual = ((1-α)I + αL)·G - (1-α)H
                let mut max_res: f64 = 0.0;
                for i in 0..s {
                    for c in 0..6 {
                        let mut v = (1.0 - alpha) * g.get(i, c);
                        for j in 0..s {
                            v += alpha * lap.get(i, j) * g.get(j, c);
                        }
                        max_res = max_res.max((v - (1.0 - alpha) * h.get(i, c)).abs());
                    }
                }
                assert!(max_res < 1e-8, "alpha {alpha} w {w}: residual {max_res}");
            }
        }
    }

    #[test]
    fn smoothing_is_order_sensitive() {
        // Unlike max/mean/ABMIL, the operator must react to instance order.
        // Note reversal is a chain symmetry, so test against a shuffle.
        let mut rng = SeededRng::new(3, 0);
        let h = random_bag(6, 2, &mut rng);
        let g = smap_smooth(&h, 0.5, 1).unwrap();

        let order = [2usize, 0, 4, 1, 5, 3];
        let shuffled = Mat::from_fn(6, 2, |i, c| h.get(order[i], c));
        let g_shuf = smap_smooth(&shuffled, 0.5, 1).unwrap();
        let differs = order.iter().enumerate().any(|(pos, &j)| {
            (0..2).any(|c| (g.get(j, c) - g_shuf.get(pos, c)).abs() > 1e-9)
        });
        assert!(differs, "smoothing ignored instance order");
    }

    #[test]
    fn alpha_zero_pool_equals_abmil() {
        let mut rng = SeededRng::new(4, 0);
        let inner = AbmilParams::<f64>::init(3, 5, &mut rng);
        let h = random_bag(6, 5, &mut rng);
        let cfg = SmapConfig {
            alpha: 0.0,
            n_neighbors: 1,
            inner: inner.clone(),
        };
        let a = smap_pool(&h, &cfg).unwrap();
        let b = abmil_pool(&h, &inner).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.attention, b.attention);
    }

    #[test]
    fn attention_sums_to_one() {
        let mut rng = SeededRng::new(5, 0);
        let cfg = SmapConfig {
            alpha: 0.6,
            n_neighbors: 1,
            inner: AbmilParams::<f64>::init(3, 4, &mut rng),
        };
        let h = random_bag(9, 4, &mut rng);
        let r = smap_pool(&h, &cfg).unwrap();
        let sum: f64 = r.attention.unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_alpha_rejected() {
        let mut rng = SeededRng::new(6, 0);
        let h = random_bag(3, 2, &mut rng);
        assert!(smap_smooth(&h, 1.0, 1).is_err());
        assert!(smap_smooth(&h, -0.1, 1).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(7, 0);
        for trial in 0..30 {
            let s = 2 + rng.uniform_below(5) as usize;
            let m = 3 + rng.uniform_below(3) as usize;
            let l = 2 + rng.uniform_below(3) as usize;
            let alpha = [0.0, 0.3, 0.7][trial % 3];
            let w = 1 + trial % 2;
            let cfg = SmapConfig {
                alpha,
                n_neighbors: w,
                inner: AbmilParams::<f64>::init(l, m, &mut rng),
            };
            let h = random_bag(s, m, &mut rng);
            let c: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let d: Vec<f64> = (0..s).map(|_| rng.standard_normal()).collect();

            let objective = |proj: &[f64], score: &[f64], hdata: &[f64]| {
                let cfg2 = SmapConfig {
                    alpha,
                    n_neighbors: w,
                    inner: AbmilParams::new(
                        Mat::from_vec(l, m, proj.to_vec()).unwrap(),
                        score.to_vec(),
                    )
                    .unwrap(),
                };
                let hm = Mat::from_vec(s, m, hdata.to_vec()).unwrap();
                let r = smap_pool(&hm, &cfg2).unwrap();
                dot(&r.z, &c) + dot(r.attention.as_ref().unwrap(), &d)
            };

            let upstream = PoolUpstream {
                z: c.clone(),
                attention: Some(d.clone()),
            };
            let mut grads = cfg.inner.zeros_like();
            let grad_h = smap_backward(&h, &cfg, &upstream, &mut grads).unwrap();

            let eps = 1e-5;
            let fd_proj = finite_diff_gradient(
                |x| objective(x, &cfg.inner.score, h.data()),
                cfg.inner.proj.data(),
                eps,
            )
            .unwrap();
            let fd_h = finite_diff_gradient(
                |x| objective(cfg.inner.proj.data(), &cfg.inner.score, x),
                h.data(),
                eps,
            )
            .unwrap();
            for (a, f) in grads.proj.data().iter().zip(&fd_proj) {
                assert!(gradients_close(*a, *f, 1e-4), "trial {trial} proj {a} vs {f}");
            }
            for (a, f) in grad_h.data().iter().zip(&fd_h) {
                assert!(gradients_close(*a, *f, 1e-4), "trial {trial} h {a} vs {f}");
            }
        }
    }
}

//! Direct solvers for tridiagonal and symmetric banded systems.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

/// An `n × n` tridiagonal matrix stored by its three diagonals.
#[derive(Clone, Debug)]
pub struct Tridiagonal<T: Scalar> {
    /// Sub-diagonal, length `n - 1`.
    pub sub: Vec<T>,
    /// Main diagonal, length `n`.
    pub diag: Vec<T>,
    /// Super-diagonal, length `n - 1`.
    pub sup: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn new(sub: Vec<T>, diag: Vec<T>, sup: Vec<T>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() != n.saturating_sub(1) || sup.len() != n.saturating_sub(1) {
            return Err(Error::shape(
                format!("diagonals of length {n}/{}/{}", n - 1, n - 1),
                format!("{}/{}/{}", diag.len(), sub.len(), sup.len()),
            ));
        }
        Ok(Self { sub, diag, sup })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// LU factorization without pivoting (Thomas algorithm setup).
    ///
    /// Errors on an exactly zero pivot; diagonally dominant systems, as in
    /// the smoothing operator, never trigger it.
    pub fn factorize(&self) -> Result<TridiagFactor<T>> {
        let n = self.n();
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n.saturating_sub(1));
        let mut pivot = self.diag[0];
        for i in 1..n {
            if pivot == T::zero() {
                return Err(Error::SingularSystem { row: i - 1 });
            }
            pivots.push(pivot);
            let m = self.sub[i - 1] / pivot;
            multipliers.push(m);
            pivot = self.diag[i] - m * self.sup[i - 1];
        }
        if pivot == T::zero() {
            return Err(Error::SingularSystem { row: n - 1 });
        }
        pivots.push(pivot);
        Ok(TridiagFactor {
            pivots,
            multipliers,
            sup: self.sup.clone(),
        })
    }
}

/// Precomputed Thomas factorization, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct TridiagFactor<T: Scalar> {
    pivots: Vec<T>,
    multipliers: Vec<T>,
    sup: Vec<T>,
}

impl<T: Scalar> TridiagFactor<T> {
    /// Solves in place for one right-hand side.
    pub fn solve_vec(&self, rhs: &mut [T]) {
        let n = self.pivots.len();
        debug_assert_eq!(rhs.len(), n);
        for i in 1..n {
            let update = self.multipliers[i - 1] * rhs[i - 1];
            rhs[i] = rhs[i] - update;
        }
        rhs[n - 1] = rhs[n - 1] / self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.sup[i] * rhs[i + 1]) / self.pivots[i];
        }
    }

    /// Solves for every column of `rhs`.
    pub fn solve(&self, rhs: &Matrix<T>) -> Matrix<T> {
        let n = self.pivots.len();
        debug_assert_eq!(rhs.rows(), n);
        let cols = rhs.cols();
        let mut out = rhs.clone();
        // Row-major storage: run the recurrences across whole rows so each
        // column is solved simultaneously.
        for i in 1..n {
            let m = self.multipliers[i - 1];
            let (prev, cur) = out.data_mut().split_at_mut(i * cols);
            let prev = &prev[(i - 1) * cols..];
            for c in 0..cols {
                cur[c] = cur[c] - m * prev[c];
            }
        }
        {
            let p = self.pivots[n - 1];
            for v in out.row_mut(n - 1) {
                *v = *v / p;
            }
        }
        for i in (0..n - 1).rev() {
            let s = self.sup[i];
            let p = self.pivots[i];
            let (cur, next) = out.data_mut().split_at_mut((i + 1) * cols);
            let cur = &mut cur[i * cols..];
            for c in 0..cols {
                cur[c] = (cur[c] - s * next[c]) / p;
            }
        }
        out
    }
}

/// Solves `sys · X = rhs` column-wise with the Thomas algorithm.
pub fn tridiag_solve<T: Scalar>(sys: &Tridiagonal<T>, rhs: &Matrix<T>) -> Result<Matrix<T>> {
    if rhs.rows() != sys.n() {
        return Err(Error::shape(
            format!("rhs with {} rows", sys.n()),
            format!("{} rows", rhs.rows()),
        ));
    }
    Ok(sys.factorize()?.solve(rhs))
}

/// Symmetric positive-definite banded matrix, lower band storage.
///
/// `band[i][d]` holds entry `(i, i - d)` for `d = 0..=bandwidth`.
#[derive(Clone, Debug)]
pub struct SymmetricBanded<T: Scalar> {
    n: usize,
    bandwidth: usize,
    band: Vec<T>,
}

impl<T: Scalar> SymmetricBanded<T> {
    pub fn from_fn(n: usize, bandwidth: usize, mut entry: impl FnMut(usize, usize) -> T) -> Self {
        let w = bandwidth + 1;
        let mut band = vec![T::zero(); n * w];
        for i in 0..n {
            for d in 0..=bandwidth.min(i) {
                band[i * w + d] = entry(i, i - d);
            }
        }
        Self { n, bandwidth, band }
    }

    /// Banded Cholesky factorization `A = L·Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky<T>> {
        let w = self.bandwidth + 1;
        let mut l = self.band.clone();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..i {
                // l[i][j] = (a[i][j] - Σ_k l[i][k] l[j][k]) / l[j][j]
                let mut s = l[i * w + (i - j)];
                let klo = lo.max(j.saturating_sub(self.bandwidth));
                for k in klo..j {
                    s = s - l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                l[i * w + (i - j)] = s / l[j * w];
            }
            let mut d = l[i * w];
            for k in lo..i {
                let v = l[i * w + (i - k)];
                d = d - v * v;
            }
            if !(d > T::zero()) {
                return Err(Error::SingularSystem { row: i });
            }
            l[i * w] = d.sqrt();
        }
        Ok(BandedCholesky {
            n: self.n,
            bandwidth: self.bandwidth,
            l,
        })
    }
}

/// Cholesky factor of a [`SymmetricBanded`] matrix.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T: Scalar> {
    n: usize,
    bandwidth: usize,
    l: Vec<T>,
}

impl<T: Scalar> BandedCholesky<T> {
    pub fn solve_vec(&self, rhs: &mut [T]) {
        let w = self.bandwidth + 1;
        // Forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let mut s = rhs[i];
            for k in lo..i {
                s = s - self.l[i * w + (i - k)] * rhs[k];
            }
            rhs[i] = s / self.l[i * w];
        }
        // Backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let hi = (i + self.bandwidth).min(self.n - 1);
            let mut s = rhs[i];
            for k in i + 1..=hi {
                s = s - self.l[k * w + (k - i)] * rhs[k];
            }
            rhs[i] = s / self.l[i * w];
        }
    }

    pub fn solve(&self, rhs: &Matrix<T>) -> Matrix<T> {
        debug_assert_eq!(rhs.rows(), self.n);
        let cols = rhs.cols();
        let mut out = rhs.clone();
        let mut column = vec![T::zero(); self.n];
        for c in 0..cols {
            for i in 0..self.n {
                column[i] = out.get(i, c);
            }
            self.solve_vec(&mut column);
            for i in 0..self.n {
                out.set(i, c, column[i]);
            }
        }
        out
    }
}

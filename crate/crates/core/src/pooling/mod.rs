//! Pooling operators: max, mean, attention (ABMIL), smoothed attention
//! (SmAP), and transformer pooling (TransMIL), each with forward
//! evaluation, attention extraction, and exact analytic gradients.

pub mod abmil;
pub mod smap;
pub mod transmil;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::{axpy, Matrix};
use crate::scalar::Scalar;

pub use abmil::{abmil_attention, abmil_pool, AbmilParams};
pub use smap::{smap_pool, smap_smooth, SmapConfig};
pub use transmil::{transmil_pool, TransmilConfig, TransmilParams};

/// The five pooling operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Mean,
    Abmil,
    Smap,
    Transmil,
}

impl PoolKind {
    pub fn name(self) -> &'static str {
        match self {
            PoolKind::Max => "max",
            PoolKind::Mean => "mean",
            PoolKind::Abmil => "abmil",
            PoolKind::Smap => "smap",
            PoolKind::Transmil => "transmil",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "max" => Ok(PoolKind::Max),
            "mean" => Ok(PoolKind::Mean),
            "abmil" => Ok(PoolKind::Abmil),
            "smap" => Ok(PoolKind::Smap),
            "transmil" => Ok(PoolKind::Transmil),
            other => Err(Error::invalid(format!("unknown pooling kind {other:?}"))),
        }
    }

    /// Whether the operator produces per-instance attention weights.
    pub fn has_attention(self) -> bool {
        matches!(self, PoolKind::Abmil | PoolKind::Smap | PoolKind::Transmil)
    }
}

impl std::fmt::Display for PoolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Bag-level embedding plus per-instance attention where defined.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolResult<T: Scalar> {
    pub z: Vec<T>,
    pub attention: Option<Vec<T>>,
}

/// Gradient with respect to a [`PoolResult`].
#[derive(Clone, Debug)]
pub struct PoolUpstream<T: Scalar> {
    pub z: Vec<T>,
    pub attention: Option<Vec<T>>,
}

impl<T: Scalar> PoolUpstream<T> {
    pub fn from_z(z: Vec<T>) -> Self {
        Self { z, attention: None }
    }
}

/// Trainable parameters (and fixed hyperparameters) of one pooling operator.
#[derive(Clone, Debug)]
pub enum PoolParams<T: Scalar> {
    Max,
    Mean,
    Abmil(AbmilParams<T>),
    Smap(SmapConfig<T>),
    Transmil(TransmilParams<T>),
}

impl<T: Scalar> PoolParams<T> {
    pub fn kind(&self) -> PoolKind {
        match self {
            PoolParams::Max => PoolKind::Max,
            PoolParams::Mean => PoolKind::Mean,
            PoolParams::Abmil(_) => PoolKind::Abmil,
            PoolParams::Smap(_) => PoolKind::Smap,
            PoolParams::Transmil(_) => PoolKind::Transmil,
        }
    }

    /// Same structure with every trainable tensor zeroed; gradient and
    /// momentum buffers are built this way.
    pub fn zeros_like(&self) -> Self {
        match self {
            PoolParams::Max => PoolParams::Max,
            PoolParams::Mean => PoolParams::Mean,
            PoolParams::Abmil(p) => PoolParams::Abmil(p.zeros_like()),
            PoolParams::Smap(c) => PoolParams::Smap(SmapConfig {
                alpha: c.alpha,
                n_neighbors: c.n_neighbors,
                inner: c.inner.zeros_like(),
            }),
            PoolParams::Transmil(p) => PoolParams::Transmil(p.zeros_like()),
        }
    }

    pub fn leaves(&self) -> Vec<Leaf<'_, T>> {
        match self {
            PoolParams::Max | PoolParams::Mean => Vec::new(),
            PoolParams::Abmil(p) => p.leaves("abmil"),
            PoolParams::Smap(c) => c.inner.leaves("smap"),
            PoolParams::Transmil(p) => p.leaves(),
        }
    }

    pub fn leaves_mut(&mut self) -> Vec<LeafMut<'_, T>> {
        match self {
            PoolParams::Max | PoolParams::Mean => Vec::new(),
            PoolParams::Abmil(p) => p.leaves_mut("abmil"),
            PoolParams::Smap(c) => c.inner.leaves_mut("smap"),
            PoolParams::Transmil(p) => p.leaves_mut(),
        }
    }
}

/// Named view of one trainable tensor.
pub struct Leaf<'a, T> {
    pub name: String,
    pub data: &'a [T],
    /// Whether L1/L2 penalties apply (bias-like tensors are exempt).
    pub penalized: bool,
}

/// Mutable named view of one trainable tensor.
pub struct LeafMut<'a, T> {
    pub name: String,
    pub data: &'a mut [T],
    pub penalized: bool,
}

/// Element-wise max pooling; ties resolve to the first index.
pub fn max_pool<T: Scalar>(h: &Matrix<T>) -> Result<PoolResult<T>> {
    if h.rows() == 0 {
        return Err(Error::EmptyInput("max_pool bag"));
    }
    let mut z = h.row(0).to_vec();
    for row in h.iter_rows().skip(1) {
        for (zi, &v) in z.iter_mut().zip(row) {
            if v > *zi {
                *zi = v;
            }
        }
    }
    Ok(PoolResult { z, attention: None })
}

/// Per-column argmax (first index on ties), the subgradient support of max
/// pooling.
pub fn max_pool_argmax<T: Scalar>(h: &Matrix<T>) -> Vec<usize> {
    let mut arg = vec![0usize; h.cols()];
    let mut best = h.row(0).to_vec();
    for (j, row) in h.iter_rows().enumerate().skip(1) {
        for (c, &v) in row.iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                arg[c] = j;
            }
        }
    }
    arg
}

/// Element-wise mean pooling.
pub fn mean_pool<T: Scalar>(h: &Matrix<T>) -> Result<PoolResult<T>> {
    if h.rows() == 0 {
        return Err(Error::EmptyInput("mean_pool bag"));
    }
    let inv = T::one() / T::from_f64_lossy(h.rows() as f64);
    let mut z = vec![T::zero(); h.cols()];
    for row in h.iter_rows() {
        axpy(inv, row, &mut z);
    }
    Ok(PoolResult { z, attention: None })
}

/// Numerically stable in-place softmax.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax Jacobian applied to an upstream gradient:
/// `g_logit_j = a_j (g_j - Σ_k a_k g_k)`.
pub(crate) fn softmax_backward<T: Scalar>(attention: &[T], upstream: &[T]) -> Vec<T> {
    let inner: T = attention
        .iter()
        .zip(upstream)
        .fold(T::zero(), |acc, (&a, &g)| acc + a * g);
    attention
        .iter()
        .zip(upstream)
        .map(|(&a, &g)| a * (g - inner))
        .collect()
}

/// Forward dispatch across pooling kinds.
pub fn pool_forward<T: Scalar>(params: &PoolParams<T>, h: &Matrix<T>) -> Result<PoolResult<T>> {
    match params {
        PoolParams::Max => max_pool(h),
        PoolParams::Mean => mean_pool(h),
        PoolParams::Abmil(p) => abmil_pool(h, p),
        PoolParams::Smap(c) => smap_pool(h, c),
        PoolParams::Transmil(p) => transmil_pool(h, p),
    }
}

/// Exact gradients of the forward map with respect to the bag and every
/// trainable tensor. `upstream` carries gradients for the bag embedding and,
/// when used downstream, for the attention vector.
pub fn pool_backward<T: Scalar>(
    params: &PoolParams<T>,
    h: &Matrix<T>,
    upstream: &PoolUpstream<T>,
) -> Result<(Matrix<T>, PoolParams<T>)> {
    let mut grads = params.zeros_like();
    let grad_h = match (params, &mut grads) {
        (PoolParams::Max, _) => {
            let arg = max_pool_argmax(h);
            let mut g = Matrix::zeros(h.rows(), h.cols());
            for (c, (&j, &u)) in arg.iter().zip(&upstream.z).enumerate() {
                g.set(j, c, u);
            }
            g
        }
        (PoolParams::Mean, _) => {
            let inv = T::one() / T::from_f64_lossy(h.rows() as f64);
            let mut g = Matrix::zeros(h.rows(), h.cols());
            for j in 0..h.rows() {
                for (c, &u) in upstream.z.iter().enumerate() {
                    g.set(j, c, u * inv);
                }
            }
            g
        }
        (PoolParams::Abmil(p), PoolParams::Abmil(gp)) => {
            abmil::abmil_backward(h, p, upstream, gp)?
        }
        (PoolParams::Smap(c), PoolParams::Smap(gc)) => {
            smap::smap_backward(h, c, upstream, &mut gc.inner)?
        }
        (PoolParams::Transmil(p), PoolParams::Transmil(gp)) => {
            transmil::transmil_backward(h, p, upstream, gp)?
        }
        _ => unreachable!("zeros_like preserves the variant"),
    };
    Ok((grad_h, grads))
}

//! Transformer pooling: a class token is prepended to the bag, instances
//! receive a learned positional vector by relative-position bucket, and a
//! stack of residual multi-head self-attention layers (logits `qᵀk/√D`,
//! output projection) mixes information across all instance pairs. The bag
//! embedding is the final class-token representation; the reported
//! per-instance attention is the head-mean of the last layer's class-token
//! row over the instance positions, renormalized to sum to one.

use crate::error::{Error, Result};
use crate::numerics::matrix::{axpy, Matrix};
use crate::numerics::rng::SeededRng;
use crate::pooling::{softmax_backward, softmax_in_place, Leaf, LeafMut, PoolResult, PoolUpstream};
use crate::scalar::Scalar;

/// Architectural sizes of the transformer pooler.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TransmilConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    /// Relative-position buckets for the learned positional vectors.
    pub n_buckets: usize,
}

impl Default for TransmilConfig {
    fn default() -> Self {
        Self {
            n_layers: 1,
            n_heads: 2,
            head_dim: 16,
            n_buckets: 16,
        }
    }
}

/// One attention head: query/key/value projections, each `D × M`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T: Scalar> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
}

/// One residual attention layer.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmilLayer<T: Scalar> {
    pub heads: Vec<HeadParams<T>>,
    /// Output projection, `M × (n_heads · D)`.
    pub w_out: Matrix<T>,
}

/// All trainable tensors of the transformer pooler.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmilParams<T: Scalar> {
    /// Learned class token, length `M`.
    pub class_token: Vec<T>,
    /// Positional vectors, one row per relative-position bucket.
    pub pos_bias: Matrix<T>,
    pub layers: Vec<TransmilLayer<T>>,
}

impl<T: Scalar> TransmilParams<T> {
    /// Random initialization: projections `N(0, 1/fan_in)`, class token and
    /// positional vectors zero.
    pub fn init(features: usize, cfg: &TransmilConfig, rng: &mut SeededRng) -> Self {
        let proj_std = (1.0 / features as f64).sqrt();
        let out_std = (1.0 / (cfg.n_heads * cfg.head_dim) as f64).sqrt();
        let mut gauss =
            |rows: usize, cols: usize, std: f64| {
                Matrix::from_fn(rows, cols, |_, _| {
                    T::from_f64_lossy(std * rng.standard_normal())
                })
            };
        let layers = (0..cfg.n_layers)
            .map(|_| TransmilLayer {
                heads: (0..cfg.n_heads)
                    .map(|_| HeadParams {
                        wq: gauss(cfg.head_dim, features, proj_std),
                        wk: gauss(cfg.head_dim, features, proj_std),
                        wv: gauss(cfg.head_dim, features, proj_std),
                    })
                    .collect(),
                w_out: gauss(features, cfg.n_heads * cfg.head_dim, out_std),
            })
            .collect();
        Self {
            class_token: vec![T::zero(); features],
            pos_bias: Matrix::zeros(cfg.n_buckets, features),
            layers,
        }
    }

    pub fn features(&self) -> usize {
        self.class_token.len()
    }

    pub fn n_heads(&self) -> usize {
        self.layers.first().map_or(0, |l| l.heads.len())
    }

    pub fn head_dim(&self) -> usize {
        self.layers
            .first()
            .and_then(|l| l.heads.first())
            .map_or(0, |h| h.wq.rows())
    }

    pub fn config(&self) -> TransmilConfig {
        TransmilConfig {
            n_layers: self.layers.len(),
            n_heads: self.n_heads(),
            head_dim: self.head_dim(),
            n_buckets: self.pos_bias.rows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.features();
        if m == 0 || self.layers.is_empty() || self.pos_bias.rows() == 0 {
            return Err(Error::invalid(
                "transmil needs a class token, positional buckets, and at least one layer",
            ));
        }
        if self.pos_bias.cols() != m {
            return Err(Error::shape(
                format!("pos_bias with {m} columns"),
                format!("{}", self.pos_bias.cols()),
            ));
        }
        let (heads, dim) = (self.n_heads(), self.head_dim());
        if heads == 0 || dim == 0 {
            return Err(Error::invalid("transmil needs at least one nonempty head"));
        }
        for layer in &self.layers {
            if layer.heads.len() != heads {
                return Err(Error::invalid("inconsistent head count across layers"));
            }
            for head in &layer.heads {
                for w in [&head.wq, &head.wk, &head.wv] {
                    if w.rows() != dim || w.cols() != m {
                        return Err(Error::shape(
                            format!("head projection {dim}x{m}"),
                            format!("{}x{}", w.rows(), w.cols()),
                        ));
                    }
                }
            }
            if layer.w_out.rows() != m || layer.w_out.cols() != heads * dim {
                return Err(Error::shape(
                    format!("output projection {m}x{}", heads * dim),
                    format!("{}x{}", layer.w_out.rows(), layer.w_out.cols()),
                ));
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            class_token: vec![T::zero(); self.class_token.len()],
            pos_bias: Matrix::zeros(self.pos_bias.rows(), self.pos_bias.cols()),
            layers: self
                .layers
                .iter()
                .map(|l| TransmilLayer {
                    heads: l
                        .heads
                        .iter()
                        .map(|h| HeadParams {
                            wq: Matrix::zeros(h.wq.rows(), h.wq.cols()),
                            wk: Matrix::zeros(h.wk.rows(), h.wk.cols()),
                            wv: Matrix::zeros(h.wv.rows(), h.wv.cols()),
                        })
                        .collect(),
                    w_out: Matrix::zeros(l.w_out.rows(), l.w_out.cols()),
                })
                .collect(),
        }
    }

    pub(crate) fn leaves(&self) -> Vec<Leaf<'_, T>> {
        let mut out = vec![
            Leaf {
                name: "transmil.class_token".into(),
                data: &self.class_token,
                penalized: true,
            },
            Leaf {
                name: "transmil.pos_bias".into(),
                data: self.pos_bias.data(),
                penalized: false,
            },
        ];
        for (li, layer) in self.layers.iter().enumerate() {
            for (hi, head) in layer.heads.iter().enumerate() {
                out.push(Leaf {
                    name: format!("transmil.l{li}.h{hi}.wq"),
                    data: head.wq.data(),
                    penalized: true,
                });
                out.push(Leaf {
                    name: format!("transmil.l{li}.h{hi}.wk"),
                    data: head.wk.data(),
                    penalized: true,
                });
                out.push(Leaf {
                    name: format!("transmil.l{li}.h{hi}.wv"),
                    data: head.wv.data(),
                    penalized: true,
                });
            }
            out.push(Leaf {
                name: format!("transmil.l{li}.w_out"),
                data: layer.w_out.data(),
                penalized: true,
            });
        }
        out
    }

    pub(crate) fn leaves_mut(&mut self) -> Vec<LeafMut<'_, T>> {
        let mut out = vec![
            LeafMut {
                name: "transmil.class_token".into(),
                data: &mut self.class_token,
                penalized: true,
            },
            LeafMut {
                name: "transmil.pos_bias".into(),
                data: self.pos_bias.data_mut(),
                penalized: false,
            },
        ];
        for (li, layer) in self.layers.iter_mut().enumerate() {
            for (hi, head) in layer.heads.iter_mut().enumerate() {
                out.push(LeafMut {
                    name: format!("transmil.l{li}.h{hi}.wq"),
                    data: head.wq.data_mut(),
                    penalized: true,
                });
                out.push(LeafMut {
                    name: format!("transmil.l{li}.h{hi}.wk"),
                    data: head.wk.data_mut(),
                    penalized: true,
                });
                out.push(LeafMut {
                    name: format!("transmil.l{li}.h{hi}.wv"),
                    data: head.wv.data_mut(),
                    penalized: true,
                });
            }
            out.push(LeafMut {
                name: format!("transmil.l{li}.w_out"),
                data: layer.w_out.data_mut(),
                penalized: true,
            });
        }
        out
    }
}

/// Relative-position bucket of instance `j` in a bag of `s`.
fn bucket(j: usize, s: usize, n_buckets: usize) -> usize {
    (j * n_buckets / s).min(n_buckets - 1)
}

struct HeadTrace<T: Scalar> {
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    attn: Matrix<T>,
}

struct LayerTrace<T: Scalar> {
    x_in: Matrix<T>,
    heads: Vec<HeadTrace<T>>,
    concat: Matrix<T>,
}

pub(crate) struct TransmilTrace<T: Scalar> {
    layers: Vec<LayerTrace<T>>,
    x_out: Matrix<T>,
}

fn assemble_input<T: Scalar>(h: &Matrix<T>, params: &TransmilParams<T>) -> Matrix<T> {
    let s = h.rows();
    let m = h.cols();
    let n_buckets = params.pos_bias.rows();
    let mut x = Matrix::zeros(s + 1, m);
    x.row_mut(0).copy_from_slice(&params.class_token);
    for j in 0..s {
        let row = x.row_mut(j + 1);
        row.copy_from_slice(h.row(j));
        axpy(T::one(), params.pos_bias.row(bucket(j, s, n_buckets)), row);
    }
    x
}

fn forward_trace<T: Scalar>(h: &Matrix<T>, params: &TransmilParams<T>) -> Result<TransmilTrace<T>> {
    params.validate()?;
    if h.rows() == 0 {
        return Err(Error::EmptyInput("transmil bag"));
    }
    if h.cols() != params.features() {
        return Err(Error::shape(
            format!("{} features", params.features()),
            format!("{} features", h.cols()),
        ));
    }
    let dim = params.head_dim();
    let inv_sqrt_d = T::one() / T::from_f64_lossy(dim as f64).sqrt();
    let mut x = assemble_input(h, params);
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let n = x.rows();
        let mut heads = Vec::with_capacity(layer.heads.len());
        let mut concat = Matrix::zeros(n, layer.heads.len() * dim);
        for (hi, head) in layer.heads.iter().enumerate() {
            let q = x.matmul_transb(&head.wq);
            let k = x.matmul_transb(&head.wk);
            let v = x.matmul_transb(&head.wv);
            let mut attn = q.matmul_transb(&k);
            for val in attn.data_mut() {
                *val *= inv_sqrt_d;
            }
            for j in 0..n {
                softmax_in_place(attn.row_mut(j));
            }
            let out = attn.matmul(&v);
            for j in 0..n {
                concat.row_mut(j)[hi * dim..(hi + 1) * dim].copy_from_slice(out.row(j));
            }
            heads.push(HeadTrace { q, k, v, attn });
        }
        let projected = concat.matmul_transb(&layer.w_out);
        let mut x_next = x.clone();
        for (o, &p) in x_next.data_mut().iter_mut().zip(projected.data()) {
            *o += p;
        }
        layers.push(LayerTrace {
            x_in: x,
            heads,
            concat,
        });
        x = x_next;
    }
    Ok(TransmilTrace { layers, x_out: x })
}

fn extract_attention<T: Scalar>(trace: &TransmilTrace<T>, s: usize) -> Vec<T> {
    let last = trace.layers.last().expect("validated: at least one layer");
    let n_heads = last.heads.len();
    let inv_h = T::one() / T::from_f64_lossy(n_heads as f64);
    let mut weights = vec![T::zero(); s];
    for head in &last.heads {
        let row = head.attn.row(0);
        for (w, &a) in weights.iter_mut().zip(&row[1..=s]) {
            *w += a * inv_h;
        }
    }
    let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

pub(crate) fn transmil_forward_trace<T: Scalar>(
    h: &Matrix<T>,
    params: &TransmilParams<T>,
) -> Result<(PoolResult<T>, TransmilTrace<T>)> {
    let trace = forward_trace(h, params)?;
    let z = trace.x_out.row(0).to_vec();
    let attention = extract_attention(&trace, h.rows());
    Ok((
        PoolResult {
            z,
            attention: Some(attention),
        },
        trace,
    ))
}

/// Transformer pooling of a bag.
pub fn transmil_pool<T: Scalar>(
    h: &Matrix<T>,
    params: &TransmilParams<T>,
) -> Result<PoolResult<T>> {
    transmil_forward_trace(h, params).map(|(result, _)| result)
}

pub(crate) fn transmil_backward<T: Scalar>(
    h: &Matrix<T>,
    params: &TransmilParams<T>,
    upstream: &PoolUpstream<T>,
    grads: &mut TransmilParams<T>,
) -> Result<Matrix<T>> {
    let (result, trace) = transmil_forward_trace(h, params)?;
    Ok(
        transmil_backward_from_trace(h, params, &result, &trace, upstream, grads, true)?
            .expect("grad_h requested"),
    )
}

/// Backward from a saved forward trace. With `want_grad_h = false` the
/// input-gradient matmuls of the bottom layer are skipped (training only
/// needs parameter gradients).
pub(crate) fn transmil_backward_from_trace<T: Scalar>(
    h: &Matrix<T>,
    params: &TransmilParams<T>,
    result: &PoolResult<T>,
    trace: &TransmilTrace<T>,
    upstream: &PoolUpstream<T>,
    grads: &mut TransmilParams<T>,
    want_grad_h: bool,
) -> Result<Option<Matrix<T>>> {
    let s = h.rows();
    let m = h.cols();
    let n = s + 1;
    let dim = params.head_dim();
    let n_heads = params.n_heads();
    let inv_sqrt_d = T::one() / T::from_f64_lossy(dim as f64).sqrt();

    if upstream.z.len() != m {
        return Err(Error::shape(
            format!("upstream z of length {m}"),
            format!("{}", upstream.z.len()),
        ));
    }

    // Gradient wrt the extracted attention vector, mapped back onto the
    // head-mean of the last layer's class-token row.
    let g_extract: Option<Vec<T>> = match &upstream.attention {
        None => None,
        Some(ga) => {
            if ga.len() != s {
                return Err(Error::shape(
                    format!("attention of length {s}"),
                    format!("{}", ga.len()),
                ));
            }
            let a = result
                .attention
                .as_ref()
                .expect("transmil always yields attention");
            // a = w / Σw with w the head-mean weights over instances.
            let mut total_w = T::zero();
            for head in &trace.layers.last().unwrap().heads {
                for &v in &head.attn.row(0)[1..=s] {
                    total_w += v;
                }
            }
            total_w /= T::from_f64_lossy(n_heads as f64);
            let inner: T = ga
                .iter()
                .zip(a)
                .fold(T::zero(), |acc, (&g, &ai)| acc + g * ai);
            Some(ga.iter().zip(a).map(|(&g, _)| (g - inner) / total_w).collect())
        }
    };

    let mut g_x = Matrix::zeros(n, m);
    g_x.row_mut(0).copy_from_slice(&upstream.z);

    let last_layer = trace.layers.len() - 1;
    for (li, layer_trace) in trace.layers.iter().enumerate().rev() {
        let layer = &params.layers[li];
        let g_layer = &mut grads.layers[li];

        // Residual: x_out = x_in + concat · w_outᵀ.
        let g_w_out = g_x.matmul_transa(&layer_trace.concat);
        for (acc, &v) in g_layer.w_out.data_mut().iter_mut().zip(g_w_out.data()) {
            *acc += v;
        }
        let g_concat = g_x.matmul(&layer.w_out);
        let mut g_x_in = g_x.clone();

        for (hi, head_trace) in layer_trace.heads.iter().enumerate() {
            let head = &layer.heads[hi];
            let g_head = &mut g_layer.heads[hi];
            let g_out = Matrix::from_fn(n, dim, |r, c| g_concat.get(r, hi * dim + c));

            let mut g_attn = g_out.matmul_transb(&head_trace.v);
            if li == last_layer {
                if let Some(gw) = &g_extract {
                    let inv_h = T::one() / T::from_f64_lossy(n_heads as f64);
                    let row = g_attn.row_mut(0);
                    for (k, &g) in gw.iter().enumerate() {
                        row[k + 1] += g * inv_h;
                    }
                }
            }
            let g_v = head_trace.attn.matmul_transa(&g_out);

            let mut g_logits = Matrix::zeros(n, n);
            for j in 0..n {
                let back = softmax_backward(head_trace.attn.row(j), g_attn.row(j));
                g_logits.row_mut(j).copy_from_slice(&back);
            }
            for v in g_logits.data_mut() {
                *v *= inv_sqrt_d;
            }

            let g_q = g_logits.matmul(&head_trace.k);
            let g_k = g_logits.matmul_transa(&head_trace.q);

            for (g_mat, w, g_w) in [
                (&g_q, &head.wq, &mut g_head.wq),
                (&g_k, &head.wk, &mut g_head.wk),
                (&g_v, &head.wv, &mut g_head.wv),
            ] {
                let gw_acc = g_mat.matmul_transa(&layer_trace.x_in);
                for (acc, &v) in g_w.data_mut().iter_mut().zip(gw_acc.data()) {
                    *acc += v;
                }
                // The class token and positional vectors live in the layer
                // input, so the input gradient is always needed.
                let gx_acc = g_mat.matmul(w);
                for (acc, &v) in g_x_in.data_mut().iter_mut().zip(gx_acc.data()) {
                    *acc += v;
                }
            }
        }
        g_x = g_x_in;
    }

    // Input assembly: class token, positional vectors, and the bag itself.
    for (acc, &v) in grads.class_token.iter_mut().zip(g_x.row(0)) {
        *acc += v;
    }
    let n_buckets = params.pos_bias.rows();
    for j in 0..s {
        axpy(
            T::one(),
            g_x.row(j + 1),
            grads.pos_bias.row_mut(bucket(j, s, n_buckets)),
        );
    }
    if !want_grad_h {
        return Ok(None);
    }
    let mut grad_h = Matrix::zeros(s, m);
    for j in 0..s {
        grad_h.row_mut(j).copy_from_slice(g_x.row(j + 1));
    }
    Ok(Some(grad_h))
}

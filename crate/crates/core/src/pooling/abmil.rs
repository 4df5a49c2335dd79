//! Attention-based pooling: a learned softmax weighting over instances.

use crate::error::{Error, Result};
use crate::numerics::matrix::{axpy, dot, Matrix};
use crate::numerics::rng::SeededRng;
use crate::pooling::{softmax_backward, softmax_in_place, Leaf, LeafMut, PoolResult, PoolUpstream};
use crate::scalar::Scalar;

/// Attention parameters: an `L × M` projection and a length-`L` scoring
/// vector. The attention logit of instance `j` is `score · tanh(proj · h_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbmilParams<T: Scalar> {
    pub proj: Matrix<T>,
    pub score: Vec<T>,
}

impl<T: Scalar> AbmilParams<T> {
    pub fn new(proj: Matrix<T>, score: Vec<T>) -> Result<Self> {
        if proj.rows() != score.len() || proj.rows() == 0 {
            return Err(Error::shape(
                format!("score of length {} > 0", proj.rows()),
                format!("{}", score.len()),
            ));
        }
        Ok(Self { proj, score })
    }

    /// Random initialization: entries `N(0, 1/fan_in)`.
    pub fn init(hidden: usize, features: usize, rng: &mut SeededRng) -> Self {
        let proj_std = (1.0 / features as f64).sqrt();
        let score_std = (1.0 / hidden as f64).sqrt();
        let proj = Matrix::from_fn(hidden, features, |_, _| {
            T::from_f64_lossy(proj_std * rng.standard_normal())
        });
        let score = (0..hidden)
            .map(|_| T::from_f64_lossy(score_std * rng.standard_normal()))
            .collect();
        Self { proj, score }
    }

    pub fn hidden(&self) -> usize {
        self.proj.rows()
    }

    pub fn features(&self) -> usize {
        self.proj.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            proj: Matrix::zeros(self.proj.rows(), self.proj.cols()),
            score: vec![T::zero(); self.score.len()],
        }
    }

    pub(crate) fn leaves(&self, prefix: &str) -> Vec<Leaf<'_, T>> {
        vec![
            Leaf {
                name: format!("{prefix}.proj"),
                data: self.proj.data(),
                penalized: true,
            },
            Leaf {
                name: format!("{prefix}.score"),
                data: &self.score,
                penalized: true,
            },
        ]
    }

    pub(crate) fn leaves_mut(&mut self, prefix: &str) -> Vec<LeafMut<'_, T>> {
        vec![
            LeafMut {
                name: format!("{prefix}.proj"),
                data: self.proj.data_mut(),
                penalized: true,
            },
            LeafMut {
                name: format!("{prefix}.score"),
                data: &mut self.score,
                penalized: true,
            },
        ]
    }

    fn check_input(&self, h: &Matrix<T>) -> Result<()> {
        if h.rows() == 0 {
            return Err(Error::EmptyInput("abmil bag"));
        }
        if h.cols() != self.features() {
            return Err(Error::shape(
                format!("{} features", self.features()),
                format!("{} features", h.cols()),
            ));
        }
        Ok(())
    }
}

pub(crate) struct AbmilTrace<T: Scalar> {
    /// `tanh(proj · h_j)` per instance, row-major `S × L`.
    hidden: Matrix<T>,
    pub(crate) attention: Vec<T>,
}

fn abmil_trace<T: Scalar>(h: &Matrix<T>, params: &AbmilParams<T>) -> Result<AbmilTrace<T>> {
    params.check_input(h)?;
    let s = h.rows();
    let mut hidden = h.matmul_transb(&params.proj); // S × L
    for v in hidden.data_mut() {
        *v = v.tanh();
    }
    let mut attention: Vec<T> = (0..s).map(|j| dot(hidden.row(j), &params.score)).collect();
    softmax_in_place(&mut attention);
    Ok(AbmilTrace { hidden, attention })
}

/// Softmax attention weights over instances.
pub fn abmil_attention<T: Scalar>(h: &Matrix<T>, params: &AbmilParams<T>) -> Result<Vec<T>> {
    Ok(abmil_trace(h, params)?.attention)
}

pub(crate) fn abmil_forward_trace<T: Scalar>(
    h: &Matrix<T>,
    params: &AbmilParams<T>,
) -> Result<(PoolResult<T>, AbmilTrace<T>)> {
    let trace = abmil_trace(h, params)?;
    let mut z = vec![T::zero(); h.cols()];
    for (j, row) in h.iter_rows().enumerate() {
        axpy(trace.attention[j], row, &mut z);
    }
    Ok((
        PoolResult {
            z,
            attention: Some(trace.attention.clone()),
        },
        trace,
    ))
}

/// Attention-weighted bag embedding.
pub fn abmil_pool<T: Scalar>(h: &Matrix<T>, params: &AbmilParams<T>) -> Result<PoolResult<T>> {
    abmil_forward_trace(h, params).map(|(r, _)| r)
}

/// Backward pass. Accumulates parameter gradients into `grads` and returns
/// the gradient with respect to the bag.
pub(crate) fn abmil_backward<T: Scalar>(
    h: &Matrix<T>,
    params: &AbmilParams<T>,
    upstream: &PoolUpstream<T>,
    grads: &mut AbmilParams<T>,
) -> Result<Matrix<T>> {
    let trace = abmil_trace(h, params)?;
    Ok(abmil_backward_from_trace(h, params, &trace, upstream, grads, true)?
        .expect("grad_h requested"))
}

/// Backward from a saved forward trace. Skipping `want_grad_h` halves the
/// work when the bag itself needs no gradient (training never does).
pub(crate) fn abmil_backward_from_trace<T: Scalar>(
    h: &Matrix<T>,
    params: &AbmilParams<T>,
    trace: &AbmilTrace<T>,
    upstream: &PoolUpstream<T>,
    grads: &mut AbmilParams<T>,
    want_grad_h: bool,
) -> Result<Option<Matrix<T>>> {
    let s = h.rows();
    if upstream.z.len() != h.cols() {
        return Err(Error::shape(
            format!("upstream z of length {}", h.cols()),
            format!("{}", upstream.z.len()),
        ));
    }

    // d/d a_j of the loss: the weighted-average path plus any direct use of
    // the attention vector downstream.
    let mut g_att: Vec<T> = (0..s).map(|j| dot(&upstream.z, h.row(j))).collect();
    if let Some(ga) = &upstream.attention {
        if ga.len() != s {
            return Err(Error::shape(format!("attention of length {s}"), format!("{}", ga.len())));
        }
        for (g, &extra) in g_att.iter_mut().zip(ga) {
            *g += extra;
        }
    }
    let g_logits = softmax_backward(&trace.attention, &g_att);

    let mut grad_h = want_grad_h.then(|| Matrix::zeros(s, h.cols()));
    for j in 0..s {
        // Attention path: logit_j = score · tanh(proj · h_j).
        axpy(g_logits[j], trace.hidden.row(j), &mut grads.score);
        let pre: Vec<T> = trace
            .hidden
            .row(j)
            .iter()
            .zip(&params.score)
            .map(|(&t, &u)| g_logits[j] * u * (T::one() - t * t))
            .collect();
        for (l, &p) in pre.iter().enumerate() {
            axpy(p, h.row(j), grads.proj.row_mut(l));
        }
        if let Some(gh) = grad_h.as_mut() {
            // Weighted-average path: z = Σ a_j h_j, plus the attention path
            // back through the projection.
            axpy(trace.attention[j], &upstream.z, gh.row_mut(j));
            let back = params.proj.matvec_t(&pre);
            axpy(T::one(), &back, gh.row_mut(j));
        }
    }
    Ok(grad_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_gradient, gradients_close};
    use crate::Mat;

    fn random_bag(s: usize, m: usize, rng: &mut SeededRng) -> Mat {
        Mat::from_fn(s, m, |_, _| rng.standard_normal())
    }

    #[test]
    fn singleton_bag_gets_all_attention() {
        let mut rng = SeededRng::new(1, 0);
        let p = AbmilParams::<f64>::init(3, 4, &mut rng);
        let h = random_bag(1, 4, &mut rng);
        assert_eq!(abmil_attention(&h, &p).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_projection_gives_uniform_attention() {
        let p = AbmilParams::new(Mat::zeros(3, 4), vec![0.5, -0.2, 1.0]).unwrap();
        let mut rng = SeededRng::new(2, 0);
        let h = random_bag(5, 4, &mut rng);
        for a in abmil_attention(&h, &p).unwrap() {
            assert!((a - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_give_uniform_attention() {
        let mut rng = SeededRng::new(3, 0);
        let p = AbmilParams::<f64>::init(3, 4, &mut rng);
        let row: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
        let h = Mat::from_fn(4, 4, |_, c| row[c]);
        for a in abmil_attention(&h, &p).unwrap() {
            assert!((a - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_attention_matches_mean_pool() {
        let p = AbmilParams::new(Mat::zeros(2, 3), vec![0.0, 0.0]).unwrap();
        let mut rng = SeededRng::new(4, 0);
        let h = random_bag(6, 3, &mut rng);
        let pooled = abmil_pool(&h, &p).unwrap();
        let mean = crate::pooling::mean_pool(&h).unwrap();
        for (a, b) in pooled.z.iter().zip(&mean.z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_is_on_the_simplex() {
        let mut rng = SeededRng::new(5, 0);
        for _ in 0..20 {
            let p = AbmilParams::<f64>::init(4, 6, &mut rng);
            let h = random_bag(1 + rng.uniform_below(9) as usize, 6, &mut rng);
            let a = abmil_attention(&h, &p).unwrap();
            let sum: f64 = a.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(a.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = SeededRng::new(6, 0);
        let p = AbmilParams::<f64>::init(3, 4, &mut rng);
        let h = random_bag(2, 5, &mut rng);
        assert!(abmil_pool(&h, &p).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Scalar objective c·z + d·a exercises both output paths.
        let mut rng = SeededRng::new(7, 0);
        for trial in 0..50 {
            let s = 2 + rng.uniform_below(5) as usize;
            let m = 3 + rng.uniform_below(4) as usize;
            let l = 2 + rng.uniform_below(3) as usize;
            let params = AbmilParams::<f64>::init(l, m, &mut rng);
            let h = random_bag(s, m, &mut rng);
            let c: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let d: Vec<f64> = (0..s).map(|_| rng.standard_normal()).collect();

            let objective = |proj: &[f64], score: &[f64], hdata: &[f64]| {
                let p = AbmilParams::new(
                    Mat::from_vec(l, m, proj.to_vec()).unwrap(),
                    score.to_vec(),
                )
                .unwrap();
                let hm = Mat::from_vec(s, m, hdata.to_vec()).unwrap();
                let r = abmil_pool(&hm, &p).unwrap();
                dot(&r.z, &c) + dot(r.attention.as_ref().unwrap(), &d)
            };

            let upstream = PoolUpstream {
                z: c.clone(),
                attention: Some(d.clone()),
            };
            let mut grads = params.zeros_like();
            let grad_h = abmil_backward(&h, &params, &upstream, &mut grads).unwrap();

            let eps = 1e-5;
            let fd_proj = finite_diff_gradient(
                |x| objective(x, &params.score, h.data()),
                params.proj.data(),
                eps,
            )
            .unwrap();
            let fd_score = finite_diff_gradient(
                |x| objective(params.proj.data(), x, h.data()),
                &params.score,
                eps,
            )
            .unwrap();
            let fd_h = finite_diff_gradient(
                |x| objective(params.proj.data(), &params.score, x),
                h.data(),
                eps,
            )
            .unwrap();

            for (a, f) in grads.proj.data().iter().zip(&fd_proj) {
                assert!(gradients_close(*a, *f, 1e-4), "trial {trial} proj: {a} vs {f}");
            }
            for (a, f) in grads.score.iter().zip(&fd_score) {
                assert!(gradients_close(*a, *f, 1e-4), "trial {trial} score: {a} vs {f}");
            }
            for (a, f) in grad_h.data().iter().zip(&fd_h) {
                assert!(gradients_close(*a, *f, 1e-4), "trial {trial} h: {a} vs {f}");
            }
        }
    }
}

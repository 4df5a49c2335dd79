//! Binary cross entropy with L1/L2 penalties on the weight tensors.

use crate::model::{ModelParams, RegKind};

/// Probabilities are clamped away from {0, 1} before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `-[y ln p + (1-y) ln(1-p)]` on the clamped probability.
pub fn bce(prob: f64, y: bool) -> f64 {
    let p = clamp_prob(prob);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`bce`] with respect to the probability.
pub fn bce_dprob(prob: f64, y: bool) -> f64 {
    let p = clamp_prob(prob);
    (p - y as u8 as f64) / (p * (1.0 - p))
}

/// Penalty over trainable weights; bias-like tensors are exempt.
pub fn reg_penalty(params: &ModelParams, kind: RegKind, strength: f64) -> f64 {
    if strength == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for leaf in params.leaves() {
        if !leaf.penalized {
            continue;
        }
        total += match kind {
            RegKind::L1 => leaf.data.iter().map(|v| v.abs()).sum::<f64>(),
            RegKind::L2 => leaf.data.iter().map(|v| v * v).sum::<f64>(),
        };
    }
    strength * total
}

/// Full per-bag training loss.
pub fn bce_loss(
    prob: f64,
    y: bool,
    params: &ModelParams,
    kind: RegKind,
    strength: f64,
) -> f64 {
    bce(prob, y) + reg_penalty(params, kind, strength)
}

/// Adds the penalty gradient (`strength·sign(θ)` or `2·strength·θ`) to an
/// existing gradient accumulator.
pub fn add_reg_gradient(
    params: &ModelParams,
    kind: RegKind,
    strength: f64,
    grads: &mut ModelParams,
) {
    if strength == 0.0 {
        return;
    }
    let sources = params.leaves();
    for (src, dst) in sources.iter().zip(grads.leaves_mut()) {
        debug_assert_eq!(src.name, dst.name);
        if !src.penalized {
            continue;
        }
        match kind {
            RegKind::L1 => {
                for (g, &v) in dst.data.iter_mut().zip(src.data) {
                    *g += strength * v.signum();
                }
            }
            RegKind::L2 => {
                for (g, &v) in dst.data.iter_mut().zip(src.data) {
                    *g += 2.0 * strength * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassifierParams, ModelParams};
    use crate::pooling::PoolParams;

    fn bare_model(weight: Vec<f64>) -> ModelParams {
        ModelParams {
            pool: PoolParams::Mean,
            clf: ClassifierParams { weight, bias: 3.0 },
        }
    }

    #[test]
    fn coin_flip_loss_is_ln_two() {
        assert!((bce(0.5, true) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0.5, false) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn exact_prediction_leaves_only_the_penalty() {
        let params = bare_model(vec![2.0]);
        let loss = bce_loss(1.0, true, &params, RegKind::L2, 0.1);
        assert!((loss - 0.4).abs() < 1e-9, "loss {loss}"); // 0.1 * 2²
        let loss = bce_loss(0.0, false, &params, RegKind::L1, 0.1);
        assert!((loss - 0.2).abs() < 1e-9);
    }

    #[test]
    fn bias_is_exempt_from_penalties() {
        let params = bare_model(vec![0.0]);
        assert_eq!(reg_penalty(&params, RegKind::L2, 1.0), 0.0);
    }

    #[test]
    fn clamping_keeps_losses_finite() {
        assert!(bce(0.0, true).is_finite());
        assert!(bce(1.0, false).is_finite());
        assert!(bce_dprob(0.0, true).is_finite());
    }

    #[test]
    fn reg_gradient_matches_penalty_derivative() {
        let params = bare_model(vec![1.5, -0.5]);
        let mut grads = params.zeros_like();
        add_reg_gradient(&params, RegKind::L2, 0.3, &mut grads);
        assert!((grads.clf.weight[0] - 0.9).abs() < 1e-12);
        assert!((grads.clf.weight[1] + 0.3).abs() < 1e-12);
        assert_eq!(grads.clf.bias, 0.0);

        let mut grads = params.zeros_like();
        add_reg_gradient(&params, RegKind::L1, 0.3, &mut grads);
        assert!((grads.clf.weight[0] - 0.3).abs() < 1e-12);
        assert!((grads.clf.weight[1] + 0.3).abs() < 1e-12);
    }
}

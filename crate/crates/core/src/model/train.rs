//! Mini-batch SGD with classic momentum, the validation-constrained
//! checkpoint rule, and grid search over learning rate and penalty
//! strength.

use crate::error::{Error, Result};
use crate::metrics::{auroc, ScoredSet};
use crate::model::loss::{add_reg_gradient, bce, bce_dprob, reg_penalty};
use crate::model::{sigmoid, ArchOrdering, ModelConfig, ModelParams};
use crate::numerics::matrix::axpy;
use crate::numerics::rng::SeededRng;
use crate::pooling::abmil::{abmil_backward_from_trace, abmil_forward_trace};
use crate::pooling::transmil::{transmil_backward_from_trace, transmil_forward_trace};
use crate::pooling::{max_pool, mean_pool, smap_smooth, PoolParams, PoolUpstream};
use crate::synthgen::Bag;
use crate::Mat;

const INIT_STREAM: u64 = 0x1000;
const SHUFFLE_STREAM: u64 = 0x2000;

/// Trainable tensors with their momentum buffers.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub velocity: ModelParams,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let velocity = params.zeros_like();
        Self {
            params,
            velocity,
            epoch: 0,
        }
    }
}

/// Classic momentum update: `v ← momentum·v + g`, `θ ← θ − lr·v`.
pub fn sgd_step(
    state: &mut TrainState,
    grads: &ModelParams,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let g_leaves = grads.leaves();
    let v_leaves = state.velocity.leaves_mut();
    let p_leaves = state.params.leaves_mut();
    if g_leaves.len() != p_leaves.len() {
        return Err(Error::shape(
            format!("{} tensors", p_leaves.len()),
            format!("{}", g_leaves.len()),
        ));
    }
    for ((p, v), g) in p_leaves.into_iter().zip(v_leaves).zip(&g_leaves) {
        if p.data.len() != g.data.len() || p.name != g.name {
            return Err(Error::shape(
                format!("tensor {} of {} entries", p.name, p.data.len()),
                format!("tensor {} of {} entries", g.name, g.data.len()),
            ));
        }
        for ((pi, vi), &gi) in p.data.iter_mut().zip(v.data.iter_mut()).zip(g.data) {
            *vi = momentum * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

fn zero_grads(grads: &mut ModelParams) {
    for leaf in grads.leaves_mut() {
        leaf.data.fill(0.0);
    }
}

/// Per-bag quantities that do not depend on trainable parameters.
enum BagCache {
    Raw,
    /// Pooled embedding for parameterless pooling under
    /// embedding-aggregation (and mean under prediction-aggregation, which
    /// is algebraically identical for a linear classifier).
    PooledZ(Vec<f64>),
    /// Smoothed embeddings for SmAP: the smoothing operator has no
    /// trainable parameters, so it runs once per bag.
    Smoothed(Mat),
}

fn prepare_caches(config: &ModelConfig, bags: &[Bag]) -> Result<Vec<BagCache>> {
    bags.iter()
        .map(|bag| {
            let h = &bag.embeddings;
            Ok(match (&config.ordering, config.pooling) {
                (_, crate::pooling::PoolKind::Smap) => BagCache::Smoothed(smap_smooth(
                    h,
                    config.smap_alpha,
                    config.smap_neighbors,
                )?),
                (ArchOrdering::EmbeddingAggregation, crate::pooling::PoolKind::Max) => {
                    BagCache::PooledZ(max_pool(h)?.z)
                }
                (_, crate::pooling::PoolKind::Mean) => BagCache::PooledZ(mean_pool(h)?.z),
                _ => BagCache::Raw,
            })
        })
        .collect()
}

/// Forward probability using cached bag quantities.
fn bag_prob(
    config: &ModelConfig,
    params: &ModelParams,
    bag: &Bag,
    cache: &BagCache,
) -> Result<f64> {
    let h = &bag.embeddings;
    match (&config.ordering, &params.pool, cache) {
        (_, _, BagCache::PooledZ(z)) => Ok(sigmoid(params.clf.logit(z))),
        (ArchOrdering::EmbeddingAggregation, PoolParams::Abmil(inner), _) => {
            let (r, _) = abmil_forward_trace(h, inner)?;
            Ok(sigmoid(params.clf.logit(&r.z)))
        }
        (ArchOrdering::EmbeddingAggregation, PoolParams::Smap(cfg), BagCache::Smoothed(g)) => {
            let (r, _) = abmil_forward_trace(g, &cfg.inner)?;
            Ok(sigmoid(params.clf.logit(&r.z)))
        }
        (ArchOrdering::EmbeddingAggregation, PoolParams::Transmil(p), _) => {
            let (r, _) = transmil_forward_trace(h, p)?;
            Ok(sigmoid(params.clf.logit(&r.z)))
        }
        (ArchOrdering::PredictionAggregation, PoolParams::Max, _) => {
            let logits = instance_logits(params, h);
            let best = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok(sigmoid(best))
        }
        (ArchOrdering::PredictionAggregation, PoolParams::Abmil(inner), _) => {
            let (r, _) = abmil_forward_trace(h, inner)?;
            let a = r.attention.expect("abmil yields attention");
            Ok(weighted_prob(params, h, &a))
        }
        (ArchOrdering::PredictionAggregation, PoolParams::Smap(cfg), BagCache::Smoothed(g)) => {
            let (r, _) = abmil_forward_trace(g, &cfg.inner)?;
            let a = r.attention.expect("abmil yields attention");
            Ok(weighted_prob(params, g, &a))
        }
        _ => crate::model::forward(config, params, bag).map(|p| p.prob),
    }
}

fn instance_logits(params: &ModelParams, h: &Mat) -> Vec<f64> {
    let mut logits = h.matvec(&params.clf.weight);
    for l in logits.iter_mut() {
        *l += params.clf.bias;
    }
    logits
}

fn weighted_prob(params: &ModelParams, x: &Mat, attention: &[f64]) -> f64 {
    instance_logits(params, x)
        .iter()
        .zip(attention)
        .map(|(&l, &a)| a * sigmoid(l))
        .sum()
}

/// Accumulates the gradient of the (unregularized) BCE term for one bag
/// into `grads` and returns the loss term.
fn bag_backward(
    config: &ModelConfig,
    params: &ModelParams,
    bag: &Bag,
    cache: &BagCache,
    grads: &mut ModelParams,
) -> Result<f64> {
    let h = &bag.embeddings;
    let y = bag.label;
    match (&config.ordering, &params.pool, cache) {
        // Parameterless pooling reduced to logistic regression on z.
        (_, _, BagCache::PooledZ(z)) => {
            let p = sigmoid(params.clf.logit(z));
            let dlogit = p - y as u8 as f64;
            axpy(dlogit, z, &mut grads.clf.weight);
            grads.clf.bias += dlogit;
            Ok(bce(p, y))
        }
        (ArchOrdering::EmbeddingAggregation, PoolParams::Abmil(inner), _) => {
            let (r, trace) = abmil_forward_trace(h, inner)?;
            let p = sigmoid(params.clf.logit(&r.z));
            let dlogit = p - y as u8 as f64;
            axpy(dlogit, &r.z, &mut grads.clf.weight);
            grads.clf.bias += dlogit;
            let upstream = PoolUpstream {
                z: params.clf.weight.iter().map(|w| dlogit * w).collect(),
                attention: None,
            };
            let PoolParams::Abmil(g_inner) = &mut grads.pool else {
                unreachable!("gradient container mirrors params");
            };
            abmil_backward_from_trace(h, inner, &trace, &upstream, g_inner, false)?;
            Ok(bce(p, y))
        }
        (ArchOrdering::EmbeddingAggregation, PoolParams::Smap(cfg), BagCache::Smoothed(g)) => {
            let (r, trace) = abmil_forward_trace(g, &cfg.inner)?;
            let p = sigmoid(params.clf.logit(&r.z));
            let dlogit = p - y as u8 as f64;
            axpy(dlogit, &r.z, &mut grads.clf.weight);
            grads.clf.bias += dlogit;
            let upstream = PoolUpstream {
                z: params.clf.weight.iter().map(|w| dlogit * w).collect(),
                attention: None,
            };
            let PoolParams::Smap(g_cfg) = &mut grads.pool else {
                unreachable!("gradient container mirrors params");
            };
            abmil_backward_from_trace(g, &cfg.inner, &trace, &upstream, &mut g_cfg.inner, false)?;
            Ok(bce(p, y))
        }
        (ArchOrdering::EmbeddingAggregation, PoolParams::Transmil(tp), _) => {
            let (r, trace) = transmil_forward_trace(h, tp)?;
            let p = sigmoid(params.clf.logit(&r.z));
            let dlogit = p - y as u8 as f64;
            axpy(dlogit, &r.z, &mut grads.clf.weight);
            grads.clf.bias += dlogit;
            let upstream = PoolUpstream {
                z: params.clf.weight.iter().map(|w| dlogit * w).collect(),
                attention: None,
            };
            let PoolParams::Transmil(g_tp) = &mut grads.pool else {
                unreachable!("gradient container mirrors params");
            };
            transmil_backward_from_trace(h, tp, &r, &trace, &upstream, g_tp, false)?;
            Ok(bce(p, y))
        }
        (ArchOrdering::PredictionAggregation, PoolParams::Max, _) => {
            let logits = instance_logits(params, h);
            let (arg, best) = logits
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |(ai, av), (i, &v)| {
                    if v > av {
                        (i, v)
                    } else {
                        (ai, av)
                    }
                });
            let p = sigmoid(best);
            let dlogit = p - y as u8 as f64;
            axpy(dlogit, h.row(arg), &mut grads.clf.weight);
            grads.clf.bias += dlogit;
            Ok(bce(p, y))
        }
        (ArchOrdering::PredictionAggregation, PoolParams::Abmil(inner), _) => {
            let PoolParams::Abmil(g_inner) = &mut grads.pool else {
                unreachable!("gradient container mirrors params");
            };
            weighted_prob_backward(params, h, inner, g_inner, y, &mut grads.clf, h)
        }
        (ArchOrdering::PredictionAggregation, PoolParams::Smap(cfg), BagCache::Smoothed(g)) => {
            let PoolParams::Smap(g_cfg) = &mut grads.pool else {
                unreachable!("gradient container mirrors params");
            };
            weighted_prob_backward(params, g, &cfg.inner, &mut g_cfg.inner, y, &mut grads.clf, g)
        }
        _ => Err(Error::invalid(format!(
            "unsupported training combination: {} with {}",
            config.ordering,
            config.pooling
        ))),
    }
}

/// Backward for prediction-aggregation with attention: the attention from
/// `x` weights per-instance sigmoid probabilities.
fn weighted_prob_backward(
    params: &ModelParams,
    x: &Mat,
    inner: &crate::pooling::AbmilParams<f64>,
    g_inner: &mut crate::pooling::AbmilParams<f64>,
    y: bool,
    g_clf: &mut crate::model::ClassifierParams,
    grad_input: &Mat,
) -> Result<f64> {
    let (r, trace) = abmil_forward_trace(x, inner)?;
    let attention = r.attention.expect("abmil yields attention");
    let logits = instance_logits(params, x);
    let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let p: f64 = attention.iter().zip(&probs).map(|(&a, &q)| a * q).sum();
    let dldp = bce_dprob(p, y);
    // Classifier path: dL/dlogit_j = dL/dp · a_j · p_j (1 - p_j).
    for (j, (&a, &q)) in attention.iter().zip(&probs).enumerate() {
        let dlogit = dldp * a * q * (1.0 - q);
        axpy(dlogit, grad_input.row(j), &mut g_clf.weight);
        g_clf.bias += dlogit;
    }
    // Attention path: dL/da_j = dL/dp · p_j.
    let da: Vec<f64> = probs.iter().map(|&q| dldp * q).collect();
    let upstream = PoolUpstream {
        z: vec![0.0; x.cols()],
        attention: Some(da),
    };
    abmil_backward_from_trace(x, inner, &trace, &upstream, g_inner, false)?;
    Ok(bce(p, y))
}

/// Full training loss and its gradient with respect to every trainable
/// tensor for one bag. The gradient verification suites drive this.
pub fn loss_and_gradient(
    config: &ModelConfig,
    params: &ModelParams,
    bag: &Bag,
) -> Result<(f64, ModelParams)> {
    config.validate()?;
    let caches = prepare_caches(config, std::slice::from_ref(bag))?;
    let mut grads = params.zeros_like();
    let data_loss = bag_backward(config, params, bag, &caches[0], &mut grads)?;
    add_reg_gradient(params, config.reg_kind, config.reg_strength, &mut grads);
    let loss = data_loss + reg_penalty(params, config.reg_kind, config.reg_strength);
    Ok((loss, grads))
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_auroc: f64,
    pub val_auroc: f64,
}

/// Selected parameters with their provenance.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub epoch: usize,
    pub train_auroc: f64,
    pub val_auroc: f64,
    /// False when no evaluated epoch had validation AUROC below training
    /// AUROC and the unconstrained maximum was returned instead.
    pub constraint_met: bool,
}

/// Checkpoint plus the full evaluation history.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

fn evaluate(
    config: &ModelConfig,
    params: &ModelParams,
    bags: &[Bag],
    caches: &[BagCache],
) -> Result<(f64, f64)> {
    let mut scores = Vec::with_capacity(bags.len());
    let mut loss = 0.0;
    for (bag, cache) in bags.iter().zip(caches) {
        let p = bag_prob(config, params, bag, cache)?;
        loss += bce(p, bag.label);
        scores.push(p);
    }
    let labels: Vec<bool> = bags.iter().map(|b| b.label).collect();
    let roc = match auroc(&ScoredSet::new(&scores, &labels)?) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok((roc, loss / bags.len() as f64))
}

/// Trains per the configured protocol and returns the checkpoint that
/// maximizes validation AUROC subject to validation AUROC < training AUROC,
/// falling back to the unconstrained maximum (flagged) when no evaluated
/// epoch qualifies.
pub fn train(config: &ModelConfig, train_set: &[Bag], val_set: &[Bag]) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput("train/val split"));
    }
    let features = train_set[0].feature_dim();
    for bag in train_set.iter().chain(val_set) {
        if bag.feature_dim() != features {
            return Err(Error::shape(
                format!("{features} features"),
                format!("{}", bag.feature_dim()),
            ));
        }
    }

    let eval_every = if config.eval_every > 0 {
        config.eval_every
    } else if train_set.len() <= 1000 {
        1
    } else {
        5
    };

    let init_rng = &mut SeededRng::new(config.init_seed, INIT_STREAM);
    let params = ModelParams::init(config, features, init_rng)?;
    let mut state = TrainState::new(params);

    let train_caches = prepare_caches(config, train_set)?;
    let val_caches = prepare_caches(config, val_set)?;

    let mut history = Vec::new();
    let mut best_constrained: Option<(f64, Checkpoint)> = None;
    let mut best_any: Option<(f64, Checkpoint)> = None;

    let record = |state: &TrainState,
                      epoch: usize,
                      history: &mut Vec<EpochRecord>,
                      best_constrained: &mut Option<(f64, Checkpoint)>,
                      best_any: &mut Option<(f64, Checkpoint)>|
     -> Result<()> {
        let (train_auroc, train_loss) = evaluate(config, &state.params, train_set, &train_caches)?;
        let (val_auroc, _) = evaluate(config, &state.params, val_set, &val_caches)?;
        let train_loss =
            train_loss + reg_penalty(&state.params, config.reg_kind, config.reg_strength);
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_auroc,
            val_auroc,
        });
        let snapshot = || Checkpoint {
            params: state.params.clone(),
            epoch,
            train_auroc,
            val_auroc,
            constraint_met: true,
        };
        if val_auroc < train_auroc
            && best_constrained.as_ref().map_or(true, |(v, _)| val_auroc > *v)
        {
            *best_constrained = Some((val_auroc, snapshot()));
        }
        let key = if val_auroc.is_nan() { f64::NEG_INFINITY } else { val_auroc };
        if best_any.as_ref().map_or(true, |(v, _)| key > *v) {
            *best_any = Some((key, snapshot()));
        }
        Ok(())
    };

    record(&state, 0, &mut history, &mut best_constrained, &mut best_any)?;

    let shuffle_base = SeededRng::new(config.init_seed, SHUFFLE_STREAM);
    let mut grads = state.params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = shuffle_base.derive(epoch as u64);
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            zero_grads(&mut grads);
            for &idx in batch {
                bag_backward(
                    config,
                    &state.params,
                    &train_set[idx],
                    &train_caches[idx],
                    &mut grads,
                )?;
            }
            let scale = 1.0 / batch.len() as f64;
            for leaf in grads.leaves_mut() {
                for g in leaf.data.iter_mut() {
                    *g *= scale;
                }
            }
            add_reg_gradient(&state.params, config.reg_kind, config.reg_strength, &mut grads);
            sgd_step(&mut state, &grads, config.lr, config.momentum)?;
        }
        state.epoch = epoch;
        if epoch % eval_every == 0 || epoch == config.epochs {
            record(&state, epoch, &mut history, &mut best_constrained, &mut best_any)?;
        }
    }

    let checkpoint = match best_constrained {
        Some((_, ckpt)) => ckpt,
        None => {
            let (_, mut ckpt) = best_any.expect("at least the initial evaluation exists");
            ckpt.constraint_met = false;
            ckpt
        }
    };
    Ok(TrainOutcome {
        checkpoint,
        history,
    })
}

/// Learning-rate and penalty-strength grids.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lrs: Vec<f64>,
    pub reg_strengths: Vec<f64>,
}

impl Default for GridSpec {
    /// The full benchmark grids: 4 learning rates × 8 penalty strengths.
    fn default() -> Self {
        Self {
            lrs: vec![0.1, 0.01, 0.001, 0.0001],
            reg_strengths: vec![1.0, 0.1, 0.01, 0.001, 0.0001, 1e-5, 1e-6, 0.0],
        }
    }
}

/// Outcome of one grid cell.
#[derive(Clone, Debug)]
pub struct GridRun {
    pub lr: f64,
    pub reg_strength: f64,
    pub val_auroc: f64,
    pub train_auroc: f64,
    pub epoch: usize,
    pub constraint_met: bool,
}

/// Winner selection: maximum validation AUROC, ties broken by smaller
/// penalty then smaller learning rate. A pure fold, so parallel and serial
/// execution agree.
pub fn select_best(runs: &[GridRun]) -> Option<usize> {
    let key = |r: &GridRun| {
        let v = if r.val_auroc.is_nan() { -1.0 } else { r.val_auroc };
        (v, std::cmp::Reverse(r.reg_strength.to_bits()), std::cmp::Reverse(r.lr.to_bits()))
    };
    let mut best: Option<usize> = None;
    for (i, run) in runs.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (kv, kr, kl) = key(run);
                let (bv, br, bl) = key(&runs[b]);
                (kv, kr, kl) > (bv, br, bl)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Grid-search outcome: the winning configuration and its checkpoint.
#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub best_config: ModelConfig,
    pub checkpoint: Checkpoint,
    pub runs: Vec<GridRun>,
}

/// Trains every (lr, reg) combination and selects by validation AUROC.
pub fn grid_search(
    base: &ModelConfig,
    grid: &GridSpec,
    train_set: &[Bag],
    val_set: &[Bag],
) -> Result<GridOutcome> {
    if grid.lrs.is_empty() || grid.reg_strengths.is_empty() {
        return Err(Error::EmptyInput("grid"));
    }
    let mut runs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut configs = Vec::new();
    for &lr in &grid.lrs {
        for &reg in &grid.reg_strengths {
            let mut config = base.clone();
            config.lr = lr;
            config.reg_strength = reg;
            let outcome = train(&config, train_set, val_set)?;
            runs.push(GridRun {
                lr,
                reg_strength: reg,
                val_auroc: outcome.checkpoint.val_auroc,
                train_auroc: outcome.checkpoint.train_auroc,
                epoch: outcome.checkpoint.epoch,
                constraint_met: outcome.checkpoint.constraint_met,
            });
            checkpoints.push(outcome.checkpoint);
            configs.push(config);
        }
    }
    let best = select_best(&runs).expect("grid is non-empty");
    Ok(GridOutcome {
        best_config: configs.swap_remove(best),
        checkpoint: checkpoints.swap_remove(best),
        runs,
    })
}

//! Encoder-free MIL classifiers: a pooling operator and a linear-sigmoid
//! classifier composed under either architectural ordering.

pub mod checkpoint;
pub mod loss;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::dot;
use crate::numerics::rng::SeededRng;
use crate::pooling::{
    abmil_attention, mean_pool, pool_forward, smap_smooth, AbmilParams, Leaf, LeafMut, PoolKind,
    PoolParams, SmapConfig, TransmilConfig, TransmilParams,
};
use crate::synthgen::Bag;
use crate::Mat;

pub use train::{
    grid_search, loss_and_gradient, select_best, sgd_step, train, Checkpoint, EpochRecord,
    GridOutcome, GridRun, GridSpec, TrainOutcome, TrainState,
};

/// Where pooling sits relative to the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchOrdering {
    /// Encode, pool, then classify.
    EmbeddingAggregation,
    /// Encode, classify per instance, then pool.
    PredictionAggregation,
}

impl ArchOrdering {
    pub fn name(self) -> &'static str {
        match self {
            ArchOrdering::EmbeddingAggregation => "embedding-aggregation",
            ArchOrdering::PredictionAggregation => "prediction-aggregation",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "embedding-aggregation" | "embedding" => Ok(ArchOrdering::EmbeddingAggregation),
            "prediction-aggregation" | "prediction" => Ok(ArchOrdering::PredictionAggregation),
            other => Err(Error::invalid(format!("unknown ordering {other:?}"))),
        }
    }
}

impl std::fmt::Display for ArchOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regularization penalty family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    L1,
    L2,
}

impl RegKind {
    pub fn name(self) -> &'static str {
        match self {
            RegKind::L1 => "l1",
            RegKind::L2 => "l2",
        }
    }
}

/// Full training configuration for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub ordering: ArchOrdering,
    pub pooling: PoolKind,
    pub reg_kind: RegKind,
    pub reg_strength: f64,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub init_seed: u64,
    /// Hidden width of the attention scorer (ABMIL and SmAP).
    pub attention_hidden: usize,
    /// Smoothing strength for SmAP.
    pub smap_alpha: f64,
    /// Chain neighbors per side for SmAP.
    pub smap_neighbors: usize,
    pub transmil: TransmilConfig,
    /// Epochs between AUROC evaluations; `0` selects the built-in rule
    /// (every epoch up to 1,000 training bags, every 5 epochs above).
    pub eval_every: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ordering: ArchOrdering::EmbeddingAggregation,
            pooling: PoolKind::Mean,
            reg_kind: RegKind::L2,
            reg_strength: 0.0,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 1000,
            init_seed: 0,
            attention_hidden: 32,
            smap_alpha: 0.5,
            smap_neighbors: 1,
            transmil: TransmilConfig::default(),
            eval_every: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pooling == PoolKind::Transmil && self.ordering == ArchOrdering::PredictionAggregation
        {
            return Err(Error::invalid(
                "transmil has no prediction-aggregation form (multi-head self-attention pools globally)",
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be positive: {}", self.lr)));
        }
        if self.reg_strength < 0.0 {
            return Err(Error::invalid(format!(
                "reg_strength must be non-negative: {}",
                self.reg_strength
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.smap_alpha >= 0.0 && self.smap_alpha < 1.0) {
            return Err(Error::invalid(format!(
                "smap_alpha must be in [0,1): {}",
                self.smap_alpha
            )));
        }
        Ok(())
    }
}

/// Linear map to one logit plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl ClassifierParams {
    pub fn init(features: usize, rng: &mut SeededRng) -> Self {
        let std = (1.0 / features as f64).sqrt();
        Self {
            weight: (0..features).map(|_| std * rng.standard_normal()).collect(),
            bias: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: vec![0.0; self.weight.len()],
            bias: 0.0,
        }
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        dot(&self.weight, features) + self.bias
    }
}

/// Every trainable tensor of one model.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub pool: PoolParams<f64>,
    pub clf: ClassifierParams,
}

impl ModelParams {
    /// Seeded initialization for the configured pooling kind and ordering.
    pub fn init(config: &ModelConfig, features: usize, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let pool = match config.pooling {
            PoolKind::Max => PoolParams::Max,
            PoolKind::Mean => PoolParams::Mean,
            PoolKind::Abmil => PoolParams::Abmil(AbmilParams::init(
                config.attention_hidden,
                features,
                rng,
            )),
            PoolKind::Smap => PoolParams::Smap(SmapConfig {
                alpha: config.smap_alpha,
                n_neighbors: config.smap_neighbors,
                inner: AbmilParams::init(config.attention_hidden, features, rng),
            }),
            PoolKind::Transmil => {
                PoolParams::Transmil(TransmilParams::init(features, &config.transmil, rng))
            }
        };
        let clf = ClassifierParams::init(features, rng);
        Ok(Self { pool, clf })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            pool: self.pool.zeros_like(),
            clf: self.clf.zeros_like(),
        }
    }

    pub fn features(&self) -> usize {
        self.clf.weight.len()
    }

    pub fn leaves(&self) -> Vec<Leaf<'_, f64>> {
        let mut out = self.pool.leaves();
        out.push(Leaf {
            name: "clf.weight".into(),
            data: &self.clf.weight,
            penalized: true,
        });
        out.push(Leaf {
            name: "clf.bias".into(),
            data: std::slice::from_ref(&self.clf.bias),
            penalized: false,
        });
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<LeafMut<'_, f64>> {
        let mut out = self.pool.leaves_mut();
        out.push(LeafMut {
            name: "clf.weight".into(),
            data: &mut self.clf.weight,
            penalized: true,
        });
        out.push(LeafMut {
            name: "clf.bias".into(),
            data: std::slice::from_mut(&mut self.clf.bias),
            penalized: false,
        });
        out
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Model output for one bag.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub prob: f64,
    pub attention: Option<Vec<f64>>,
}

/// Evaluates one bag under the configured ordering.
pub fn forward(config: &ModelConfig, params: &ModelParams, bag: &Bag) -> Result<Prediction> {
    config.validate()?;
    if bag.feature_dim() != params.features() {
        return Err(Error::shape(
            format!("{} features", params.features()),
            format!("{} features", bag.feature_dim()),
        ));
    }
    let h = &bag.embeddings;
    match config.ordering {
        ArchOrdering::EmbeddingAggregation => {
            let pooled = pool_forward(&params.pool, h)?;
            let prob = sigmoid(params.clf.logit(&pooled.z));
            Ok(Prediction {
                prob,
                attention: pooled.attention,
            })
        }
        ArchOrdering::PredictionAggregation => prediction_aggregation_forward(params, h),
    }
}

fn per_instance_logits(clf: &ClassifierParams, h: &Mat) -> Vec<f64> {
    let mut logits = h.matvec(&clf.weight);
    for l in logits.iter_mut() {
        *l += clf.bias;
    }
    logits
}

fn prediction_aggregation_forward(params: &ModelParams, h: &Mat) -> Result<Prediction> {
    let s = h.rows();
    if s == 0 {
        return Err(Error::EmptyInput("bag"));
    }
    match &params.pool {
        PoolParams::Mean => {
            // Mean of logits then sigmoid; identical to pooling embeddings
            // first because the classifier is linear.
            let z = mean_pool(h)?.z;
            Ok(Prediction {
                prob: sigmoid(params.clf.logit(&z)),
                attention: Some(vec![1.0 / s as f64; s]),
            })
        }
        PoolParams::Max => {
            let logits = per_instance_logits(&params.clf, h);
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
            let mut attention = vec![0.0; s];
            attention[arg] = 1.0;
            Ok(Prediction {
                prob: sigmoid(best),
                attention: Some(attention),
            })
        }
        PoolParams::Abmil(inner) => {
            let attention = abmil_attention(h, inner)?;
            let logits = per_instance_logits(&params.clf, h);
            let prob = attention
                .iter()
                .zip(&logits)
                .map(|(&a, &l)| a * sigmoid(l))
                .sum();
            Ok(Prediction {
                prob,
                attention: Some(attention),
            })
        }
        PoolParams::Smap(cfg) => {
            // Attention and per-instance predictions both read the smoothed
            // embeddings.
            let smoothed = smap_smooth(h, cfg.alpha, cfg.n_neighbors)?;
            let attention = abmil_attention(&smoothed, &cfg.inner)?;
            let logits = per_instance_logits(&params.clf, &smoothed);
            let prob = attention
                .iter()
                .zip(&logits)
                .map(|(&a, &l)| a * sigmoid(l))
                .sum();
            Ok(Prediction {
                prob,
                attention: Some(attention),
            })
        }
        PoolParams::Transmil(_) => Err(Error::invalid(
            "transmil has no prediction-aggregation form",
        )),
    }
}

/// Convenience forward over a whole dataset, returning probabilities.
pub fn predict_scores(
    config: &ModelConfig,
    params: &ModelParams,
    bags: &[Bag],
) -> Result<Vec<f64>> {
    bags.iter()
        .map(|b| forward(config, params, b).map(|p| p.prob))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::SeededRng;
    use crate::synthgen::{sample_dataset, GeneratorParams};

    fn tiny_bags(n: usize, seed: u64) -> Vec<Bag> {
        let params = GeneratorParams {
            m: 6,
            k: 2,
            s_low: 3,
            s_high: 8,
            r: 2,
            ..GeneratorParams::default()
        };
        sample_dataset(&params, n, &SeededRng::new(seed, 0)).unwrap()
    }

    fn config_for(pooling: PoolKind, ordering: ArchOrdering) -> ModelConfig {
        ModelConfig {
            pooling,
            ordering,
            attention_hidden: 3,
            transmil: TransmilConfig {
                n_layers: 1,
                n_heads: 2,
                head_dim: 2,
                n_buckets: 4,
            },
            ..ModelConfig::default()
        }
    }

    #[test]
    fn transmil_rejects_prediction_aggregation() {
        let config = config_for(PoolKind::Transmil, ArchOrdering::PredictionAggregation);
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_classifier_gives_even_odds() {
        for pooling in [PoolKind::Max, PoolKind::Mean, PoolKind::Abmil] {
            let config = config_for(pooling, ArchOrdering::EmbeddingAggregation);
            let mut rng = SeededRng::new(3, 0);
            let mut params = ModelParams::init(&config, 6, &mut rng).unwrap();
            params.clf.weight.fill(0.0);
            params.clf.bias = 0.0;
            let bag = &tiny_bags(1, 5)[0];
            let p = forward(&config, &params, bag).unwrap();
            assert_eq!(p.prob, 0.5);
        }
    }

    #[test]
    fn singleton_bag_orderings_coincide_for_max_and_mean() {
        let params_src = GeneratorParams {
            m: 5,
            k: 1,
            s_low: 1,
            s_high: 1,
            r: 1,
            ..GeneratorParams::default()
        };
        let bags = sample_dataset(&params_src, 4, &SeededRng::new(9, 0)).unwrap();
        for pooling in [PoolKind::Max, PoolKind::Mean] {
            let emb = config_for(pooling, ArchOrdering::EmbeddingAggregation);
            let pred = config_for(pooling, ArchOrdering::PredictionAggregation);
            let mut rng = SeededRng::new(4, 0);
            let params = ModelParams::init(&emb, 5, &mut rng).unwrap();
            for bag in &bags {
                let a = forward(&emb, &params, bag).unwrap().prob;
                let b = forward(&pred, &params, bag).unwrap().prob;
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_orderings_agree_on_any_bag() {
        // Linearity: mean of logits equals logit of mean embedding.
        let emb = config_for(PoolKind::Mean, ArchOrdering::EmbeddingAggregation);
        let pred = config_for(PoolKind::Mean, ArchOrdering::PredictionAggregation);
        let mut rng = SeededRng::new(8, 0);
        let params = ModelParams::init(&emb, 6, &mut rng).unwrap();
        for bag in tiny_bags(10, 21) {
            let a = forward(&emb, &params, &bag).unwrap().prob;
            let b = forward(&pred, &params, &bag).unwrap().prob;
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn prediction_max_reports_one_hot_attention() {
        let config = config_for(PoolKind::Max, ArchOrdering::PredictionAggregation);
        let mut rng = SeededRng::new(10, 0);
        let params = ModelParams::init(&config, 6, &mut rng).unwrap();
        let bag = &tiny_bags(1, 11)[0];
        let p = forward(&config, &params, bag).unwrap();
        let a = p.attention.unwrap();
        assert_eq!(a.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(a.iter().filter(|&&v| v == 0.0).count(), a.len() - 1);
    }

    #[test]
    fn attention_kinds_expose_simplex_attention() {
        for (pooling, ordering) in [
            (PoolKind::Abmil, ArchOrdering::EmbeddingAggregation),
            (PoolKind::Abmil, ArchOrdering::PredictionAggregation),
            (PoolKind::Smap, ArchOrdering::EmbeddingAggregation),
            (PoolKind::Smap, ArchOrdering::PredictionAggregation),
            (PoolKind::Transmil, ArchOrdering::EmbeddingAggregation),
        ] {
            let config = config_for(pooling, ordering);
            let mut rng = SeededRng::new(12, 0);
            let params = ModelParams::init(&config, 6, &mut rng).unwrap();
            let bag = &tiny_bags(1, 13)[0];
            let p = forward(&config, &params, bag).unwrap();
            let a = p.attention.expect("attention kinds report attention");
            assert_eq!(a.len(), bag.size());
            let sum: f64 = a.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(a.iter().all(|&v| v >= 0.0));
        }
    }
}

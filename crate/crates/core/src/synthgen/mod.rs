//! Shifted Mean MIL data-generating process and dataset splitting.
//!
//! A bag is a variable-size set of instance embeddings with one binary
//! label. Positive bags hide a contiguous segment of `r` instances whose
//! first `k` features are drawn with mean shifted by `delta`; everything
//! else is baseline Gaussian noise.

pub mod format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::SeededRng;
use crate::Mat;

/// All constants of the generative process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Positive-bag rate.
    pub q_pos: f64,
    /// Minimum instances per bag.
    pub s_low: usize,
    /// Maximum instances per bag.
    pub s_high: usize,
    /// Length of the positive segment.
    pub r: usize,
    /// Mean shift of discriminative features inside the segment.
    pub delta: f64,
    /// Baseline mean.
    pub mu: f64,
    /// Baseline standard deviation.
    pub sigma: f64,
    /// Feature count per instance.
    pub m: usize,
    /// Number of discriminative features (the first `k` indices).
    pub k: usize,
}

impl Default for GeneratorParams {
    /// The semi-synthetic benchmark configuration: bags of 20-60 instances,
    /// a 12-instance positive segment, shift 0.5 on the first of 768
    /// features, unit noise, balanced classes.
    fn default() -> Self {
        Self {
            q_pos: 0.5,
            s_low: 20,
            s_high: 60,
            r: 12,
            delta: 0.5,
            mu: 0.0,
            sigma: 1.0,
            m: 768,
            k: 1,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_pos) {
            return Err(Error::invalid(format!("q_pos must be in [0,1]: {}", self.q_pos)));
        }
        if self.s_low < 1 || self.s_low > self.s_high {
            return Err(Error::invalid(format!(
                "instance bounds must satisfy 1 <= s_low <= s_high: {}..{}",
                self.s_low, self.s_high
            )));
        }
        if self.r < 1 || self.r > self.s_low {
            return Err(Error::invalid(format!(
                "segment length must satisfy 1 <= r <= s_low: r={}, s_low={}",
                self.r, self.s_low
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive: {}", self.sigma)));
        }
        if self.k < 1 || self.k > self.m {
            return Err(Error::invalid(format!(
                "feature counts must satisfy 1 <= k <= m: k={}, m={}",
                self.k, self.m
            )));
        }
        Ok(())
    }
}

/// One labeled set of instance embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    /// Instance embeddings, one row per instance.
    pub embeddings: Mat,
    /// Bag label.
    pub label: bool,
    /// Start of the positive segment (0-based); present iff `label`.
    pub segment_start: Option<usize>,
    /// Per-instance labels; for positive bags exactly `r` consecutive ones.
    pub instance_labels: Vec<bool>,
}

impl Bag {
    /// Builds a bag, deriving instance labels from the segment.
    pub fn new(embeddings: Mat, label: bool, segment_start: Option<usize>, r: usize) -> Result<Self> {
        let s = embeddings.rows();
        match (label, segment_start) {
            (false, Some(_)) => {
                return Err(Error::invalid("negative bag must not carry a segment start"))
            }
            (true, None) => return Err(Error::invalid("positive bag requires a segment start")),
            (true, Some(u)) if u + r > s => {
                return Err(Error::invalid(format!(
                    "segment [{u}, {}) exceeds bag size {s}",
                    u + r
                )))
            }
            _ => {}
        }
        let instance_labels = (0..s)
            .map(|j| matches!(segment_start, Some(u) if label && j >= u && j < u + r))
            .collect();
        Ok(Self {
            embeddings,
            label,
            segment_start,
            instance_labels,
        })
    }

    /// Number of instances.
    pub fn size(&self) -> usize {
        self.embeddings.rows()
    }

    /// Embedding dimension.
    pub fn feature_dim(&self) -> usize {
        self.embeddings.cols()
    }
}

/// Random train/validation partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Fraction of bags assigned to training (4:1 default).
    pub train_fraction: f64,
    /// Seed for the split assignment.
    pub seed: u64,
    /// Size of the held-out test set, generated separately.
    pub test_size: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            test_size: 1000,
        }
    }
}

/// Samples one bag from the generative process.
///
/// Draw order is frozen: label, instance count, segment start (positive bags
/// only), then embedding entries row-major.
pub fn sample_bag(params: &GeneratorParams, rng: &mut SeededRng) -> Result<Bag> {
    params.validate()?;
    let label = rng.bernoulli(params.q_pos);
    let s = rng.uniform_range(params.s_low as u64, params.s_high as u64) as usize;
    let segment_start = if label {
        Some(rng.uniform_below((s - params.r + 1) as u64) as usize)
    } else {
        None
    };
    let mut data = Vec::with_capacity(s * params.m);
    for j in 0..s {
        let in_segment =
            matches!(segment_start, Some(u) if j >= u && j < u + params.r);
        for k in 0..params.m {
            let mean = if in_segment && k < params.k {
                params.mu + params.delta
            } else {
                params.mu
            };
            data.push(mean + params.sigma * rng.standard_normal());
        }
    }
    let embeddings = Mat::from_vec(s, params.m, data)?;
    Bag::new(embeddings, label, segment_start, params.r)
}

/// Samples `n_bags` i.i.d. bags.
///
/// Bag `i` draws from the stream `rng.derive(i)`, so a dataset of size `n`
/// is a prefix of any larger dataset sampled from the same generator state,
/// and bags can be regenerated independently and in parallel.
pub fn sample_dataset(
    params: &GeneratorParams,
    n_bags: usize,
    rng: &SeededRng,
) -> Result<Vec<Bag>> {
    if n_bags == 0 {
        return Err(Error::invalid("n_bags must be at least 1"));
    }
    params.validate()?;
    (0..n_bags)
        .map(|i| sample_bag(params, &mut rng.derive(i as u64)))
        .collect()
}

/// Randomly partitions a dataset into train and validation sets.
pub fn split(
    dataset: Vec<Bag>,
    spec: &SplitSpec,
    rng: &mut SeededRng,
) -> Result<(Vec<Bag>, Vec<Bag>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("split dataset"));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must be in (0,1): {}",
            spec.train_fraction
        )));
    }
    let n = dataset.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "split of {n} bags at fraction {} leaves an empty side",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(n - n_train);
    let mut slots: Vec<Option<Bag>> = dataset.into_iter().map(Some).collect();
    for (pos, &idx) in order.iter().enumerate() {
        let bag = slots[idx].take().expect("each index visited once");
        if pos < n_train {
            train.push(bag);
        } else {
            val.push(bag);
        }
    }
    Ok((train, val))
}

//! Rank-based classification metrics and attention-quality evaluation.
//!
//! AUROC is the Mann-Whitney statistic with midrank tie handling; AUPRC is
//! average precision with tied scores processed as one threshold block.
//! Both conventions are fixed so independent implementations can reproduce
//! results exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::SeededRng;
use crate::scalar::Scalar;
use crate::synthgen::Bag;

/// Scores paired with binary labels.
#[derive(Clone, Debug)]
pub struct ScoredSet<'a, T: Scalar> {
    pub scores: &'a [T],
    pub labels: &'a [bool],
}

impl<'a, T: Scalar> ScoredSet<'a, T> {
    pub fn new(scores: &'a [T], labels: &'a [bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(
                format!("{} labels", scores.len()),
                format!("{}", labels.len()),
            ));
        }
        Ok(Self { scores, labels })
    }
}

/// Area under the ROC curve: `(#concordant + ½·#tied) / (#pos·#neg)`,
/// computed through midranks.
pub fn auroc<T: Scalar>(set: &ScoredSet<'_, T>) -> Result<f64> {
    let n = set.scores.len();
    let n_pos = set.labels.iter().filter(|&&l| l).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "auroc needs both classes present",
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        set.scores[a]
            .partial_cmp(&set.scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // Midranks over tie groups; ranks are 1-based.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for &idx in &order[i..j] {
            if set.labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve as average precision
/// `Σ (R_k - R_{k-1})·P_k` over descending unique thresholds.
pub fn auprc<T: Scalar>(set: &ScoredSet<'_, T>) -> Result<f64> {
    let n = set.scores.len();
    let n_pos = set.labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("auprc needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        set.scores[b]
            .partial_cmp(&set.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0f64;
    let mut ap = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            if set.labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Attention mass on truly positive instances: `Σ a_j·y_j`.
pub fn attention_correctness<T: Scalar>(attention: &[T], labels: &[bool]) -> Result<f64> {
    if attention.len() != labels.len() {
        return Err(Error::shape(
            format!("{} labels", attention.len()),
            format!("{}", labels.len()),
        ));
    }
    Ok(attention
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(&a, _)| a.to_f64_lossy())
        .sum())
}

/// Image-independent attention baseline: a Gaussian bell over instance
/// position, centered on the middle instance, std `rel_width · S`.
pub fn centered_gaussian_attention(s: usize, rel_width: f64) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::EmptyInput("centered_gaussian_attention"));
    }
    if !(rel_width > 0.0) {
        return Err(Error::invalid(format!(
            "rel_width must be positive: {rel_width}"
        )));
    }
    let center = (s as f64 - 1.0) / 2.0;
    let denom = 2.0 * (rel_width * s as f64).powi(2);
    let mut weights: Vec<f64> = (0..s)
        .map(|j| (-(j as f64 - center).powi(2) / denom).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// Attention vectors paired with instance labels, evaluated on positive
/// bags only.
pub struct AttentionEval {
    /// (attention, instance labels) per positive bag.
    pub bags: Vec<(Vec<f64>, Vec<bool>)>,
}

impl AttentionEval {
    /// Collects positive bags and their attention vectors.
    pub fn new(attention: Vec<Vec<f64>>, bags: &[Bag]) -> Result<Self> {
        if attention.len() != bags.len() {
            return Err(Error::shape(
                format!("{} attention vectors", bags.len()),
                format!("{}", attention.len()),
            ));
        }
        let mut collected = Vec::new();
        for (a, bag) in attention.into_iter().zip(bags) {
            if !bag.label {
                continue;
            }
            if a.len() != bag.size() {
                return Err(Error::shape(
                    format!("attention of length {}", bag.size()),
                    format!("{}", a.len()),
                ));
            }
            collected.push((a, bag.instance_labels.clone()));
        }
        Ok(Self { bags: collected })
    }
}

/// Instance-level attention quality, averaged over positive bags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub attention_correctness: f64,
    pub instance_auroc: f64,
    pub instance_auprc: f64,
    /// Bags contributing to the correctness average.
    pub n_bags: usize,
    /// Bags contributing to AUROC/AUPRC (single-class bags are skipped).
    pub n_ranked_bags: usize,
}

/// Per-positive-bag attention correctness, AUROC, and AUPRC, each averaged
/// across positive bags. Bags whose instances are single-class are skipped
/// for the rank metrics.
pub fn instance_level_report(eval: &AttentionEval) -> Result<InstanceReport> {
    if eval.bags.is_empty() {
        return Err(Error::UndefinedMetric(
            "instance metrics need at least one positive bag",
        ));
    }
    let mut correctness = 0.0;
    let mut roc_sum = 0.0;
    let mut pr_sum = 0.0;
    let mut ranked = 0usize;
    for (attention, labels) in &eval.bags {
        correctness += attention_correctness(attention, labels)?;
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == labels.len() {
            continue;
        }
        let set = ScoredSet::new(attention, labels)?;
        roc_sum += auroc(&set)?;
        pr_sum += auprc(&set)?;
        ranked += 1;
    }
    if ranked == 0 {
        return Err(Error::UndefinedMetric(
            "every positive bag was single-class at the instance level",
        ));
    }
    Ok(InstanceReport {
        attention_correctness: correctness / eval.bags.len() as f64,
        instance_auroc: roc_sum / ranked as f64,
        instance_auprc: pr_sum / ranked as f64,
        n_bags: eval.bags.len(),
        n_ranked_bags: ranked,
    })
}

/// Paired bootstrap of an AUROC difference.
///
/// Resamples example indices with replacement, recomputes
/// `AUROC(a) - AUROC(b)` per replicate, and reports the mean difference
/// with the percentile 95% interval. Single-class resamples are redrawn
/// (bounded retries).
pub fn bootstrap_diff(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
    n_boot: usize,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(Error::shape(
            format!("{} paired scores", labels.len()),
            format!("{}/{}", scores_a.len(), scores_b.len()),
        ));
    }
    if n_boot < 100 {
        return Err(Error::invalid("n_boot must be at least 100"));
    }
    let n = labels.len();
    let mut rng = SeededRng::new(seed, 0);
    let mut diffs = Vec::with_capacity(n_boot);
    let mut sa = vec![0.0; n];
    let mut sb = vec![0.0; n];
    let mut sl = vec![false; n];
    for _ in 0..n_boot {
        let mut ok = false;
        for _attempt in 0..1000 {
            for i in 0..n {
                let j = rng.uniform_below(n as u64) as usize;
                sa[i] = scores_a[j];
                sb[i] = scores_b[j];
                sl[i] = labels[j];
            }
            if sl.iter().any(|&l| l) && sl.iter().any(|&l| !l) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::UndefinedMetric(
                "bootstrap could not draw a two-class resample",
            ));
        }
        let da = auroc(&ScoredSet::new(&sa, &sl)?)?;
        let db = auroc(&ScoredSet::new(&sb, &sl)?)?;
        diffs.push(da - db);
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    diffs.sort_by(|a, b| a.total_cmp(b));
    let lo = percentile(&diffs, 0.025);
    let hi = percentile(&diffs, 0.975);
    Ok((mean, lo, hi))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between closest ranks.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Bag-level and instance-level numbers for one evaluated split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub ordering: String,
    pub split: String,
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceReport>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "method,ordering,split,seed,auroc,auprc,attention_correctness,instance_auroc,instance_auprc";

    pub fn csv_row(&self) -> String {
        let fmt = |v: f64| format!("{v:.6}");
        let inst = match &self.instance {
            Some(i) => format!(
                "{},{},{}",
                fmt(i.attention_correctness),
                fmt(i.instance_auroc),
                fmt(i.instance_auprc)
            ),
            None => ",,".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.ordering,
            self.split,
            self.seed,
            fmt(self.auroc),
            fmt(self.auprc),
            inst
        )
    }
}

/// Mean and standard deviation across seeds/splits, the form results are
/// reported in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
    } else {
        0.0
    };
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

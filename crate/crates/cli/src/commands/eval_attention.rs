//! `milbench eval-attention`: instance-level attention quality over the
//! positive bags of a test set, from a trained checkpoint or from the
//! image-independent centered-Gaussian baseline.

use std::path::Path;

use mil_core::error::Error;
use mil_core::metrics::{
    auprc, auroc, centered_gaussian_attention, instance_level_report, AttentionEval,
    InstanceReport, MetricReport, ScoredSet,
};
use mil_core::model::checkpoint::load_checkpoint;
use mil_core::model::{forward, ArchOrdering};
use mil_core::synthgen::format::read_dataset;
use mil_core::synthgen::Bag;

use crate::config::ExperimentConfig;
use crate::data::generate_test_set;

pub enum AttentionSource {
    Checkpoint(std::path::PathBuf),
    CenteredGaussian { rel_width: f64 },
}

pub fn cmd_eval_attention(
    config: &ExperimentConfig,
    source: &AttentionSource,
    data: Option<&Path>,
) -> anyhow::Result<MetricReport> {
    let bags: Vec<Bag> = match data {
        Some(path) => read_dataset(path, config.generator.r)?,
        None => generate_test_set(config)?,
    };
    if !bags.iter().any(|b| b.label) {
        anyhow::bail!("dataset has no positive bags; instance metrics are undefined");
    }

    let (method, ordering, attention, bag_scores): (String, String, Vec<Vec<f64>>, Option<Vec<f64>>) =
        match source {
            AttentionSource::CenteredGaussian { rel_width } => {
                let attention = bags
                    .iter()
                    .map(|b| centered_gaussian_attention(b.size(), *rel_width))
                    .collect::<Result<Vec<_>, _>>()?;
                (
                    format!("centered-gaussian(w={rel_width})"),
                    "baseline".into(),
                    attention,
                    None,
                )
            }
            AttentionSource::Checkpoint(path) => {
                let (mc, ckpt) = load_checkpoint(path)?;
                if mc.ordering == ArchOrdering::EmbeddingAggregation
                    && !mc.pooling.has_attention()
                {
                    return Err(Error::Unsupported(format!(
                        "{} pooling under embedding-aggregation defines no per-instance \
                         attention; evaluate an attention method or pass the baseline flag",
                        mc.pooling
                    ))
                    .into());
                }
                let mut attention = Vec::with_capacity(bags.len());
                let mut scores = Vec::with_capacity(bags.len());
                for bag in &bags {
                    let pred = forward(&mc, &ckpt.params, bag)?;
                    scores.push(pred.prob);
                    attention.push(pred.attention.ok_or_else(|| {
                        Error::Unsupported(format!(
                            "{} produced no attention for a bag",
                            mc.pooling
                        ))
                    })?);
                }
                (
                    mc.pooling.name().to_string(),
                    mc.ordering.name().to_string(),
                    attention,
                    Some(scores),
                )
            }
        };

    let report: InstanceReport = instance_level_report(&AttentionEval::new(attention, &bags)?)?;
    let labels: Vec<bool> = bags.iter().map(|b| b.label).collect();
    let (bag_auroc, bag_auprc) = match &bag_scores {
        Some(scores) => {
            let set = ScoredSet::new(scores, &labels)?;
            (auroc(&set)?, auprc(&set)?)
        }
        // The baseline never looks at the bag contents, so it has no
        // bag-level scores.
        None => (f64::NAN, f64::NAN),
    };
    Ok(MetricReport {
        method,
        ordering,
        split: "test".into(),
        seed: config.data_seed,
        auroc: bag_auroc,
        auprc: bag_auprc,
        instance: Some(report),
    })
}

/// Writes the one-row CSV and the JSON summary next to each other.
pub fn write_report(report: &MetricReport, out_prefix: &Path) -> anyhow::Result<(std::path::PathBuf, std::path::PathBuf)> {
    if let Some(parent) = out_prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let csv_path = out_prefix.with_extension("csv");
    let json_path = out_prefix.with_extension("json");
    std::fs::write(
        &csv_path,
        format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row()),
    )?;
    std::fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    Ok((csv_path, json_path))
}

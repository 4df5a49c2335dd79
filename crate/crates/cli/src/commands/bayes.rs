//! `milbench bayes`: score a test set with the closed-form oracle.

use std::path::Path;

use mil_core::bayes::oracle_scores;
use mil_core::metrics::{auprc, auroc, ScoredSet};
use mil_core::synthgen::format::read_dataset;
use mil_core::synthgen::Bag;

use crate::config::ExperimentConfig;
use crate::data::generate_test_set;
use crate::results::ResultRow;

/// Oracle AUROC/AUPRC on the given dataset file, or on the config's
/// generated test set when no file is supplied.
pub fn cmd_bayes(config: &ExperimentConfig, data: Option<&Path>) -> anyhow::Result<ResultRow> {
    let bags: Vec<Bag> = match data {
        Some(path) => read_dataset(path, config.generator.r)?,
        None => generate_test_set(config)?,
    };
    if bags.is_empty() {
        anyhow::bail!("dataset is empty");
    }
    let started = std::time::Instant::now();
    let scores = oracle_scores(&bags, &config.generator)?;
    let labels: Vec<bool> = bags.iter().map(|b| b.label).collect();
    let set = ScoredSet::new(&scores, &labels)?;
    let row = ResultRow {
        method: "bayes".into(),
        ordering: "oracle".into(),
        train_size: 0,
        seed: config.data_seed,
        test_auroc: auroc(&set)?,
        test_auprc: auprc(&set)?,
        wall_time_s: started.elapsed().as_secs_f64(),
        best_lr: 0.0,
        best_reg: 0.0,
    };
    Ok(row)
}

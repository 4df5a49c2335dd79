//! `milbench train`: one (method, size, seed) cell, optionally with the
//! full hyperparameter grid, writing a checkpoint and the training log.

use std::io::Write;
use std::path::PathBuf;

use mil_core::metrics::{auprc, auroc, ScoredSet};
use mil_core::model::checkpoint::save_checkpoint;
use mil_core::model::{predict_scores, select_best, train, GridRun, TrainOutcome};

use crate::config::ExperimentConfig;
use crate::data::{generate_pool, generate_test_set, init_seed, split_pool};
use crate::results::ResultRow;

pub struct TrainArtifacts {
    pub row: ResultRow,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

pub fn cmd_train(
    config: &ExperimentConfig,
    method_label: &str,
    size: usize,
    seed: u64,
    use_grid: bool,
) -> anyhow::Result<TrainArtifacts> {
    config.validate()?;
    let method_idx = config
        .methods
        .iter()
        .position(|m| m.label() == method_label)
        .ok_or_else(|| {
            anyhow::anyhow!(
                "method {method_label:?} is not in the config (available: {})",
                config
                    .methods
                    .iter()
                    .map(|m| m.label())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })?;
    let method = &config.methods[method_idx];

    let pool = generate_pool(config, seed, size)?;
    let (train_set, val_set) = split_pool(config, pool, seed, size)?;

    let cells: Vec<(f64, f64)> = if use_grid {
        config
            .grid
            .lrs
            .iter()
            .flat_map(|&lr| config.grid.reg_strengths.iter().map(move |&reg| (lr, reg)))
            .collect()
    } else {
        vec![(
            *config.grid.lrs.first().unwrap_or(&0.01),
            *config.grid.reg_strengths.last().unwrap_or(&0.0),
        )]
    };

    let started = std::time::Instant::now();
    let mut runs: Vec<GridRun> = Vec::new();
    let mut outcomes: Vec<(mil_core::model::ModelConfig, TrainOutcome)> = Vec::new();
    for &(lr, reg) in &cells {
        let mut mc = method.resolve(init_seed(seed, size, method_idx));
        mc.lr = lr;
        mc.reg_strength = reg;
        let outcome = train(&mc, &train_set, &val_set)?;
        runs.push(GridRun {
            lr,
            reg_strength: reg,
            val_auroc: outcome.checkpoint.val_auroc,
            train_auroc: outcome.checkpoint.train_auroc,
            epoch: outcome.checkpoint.epoch,
            constraint_met: outcome.checkpoint.constraint_met,
        });
        outcomes.push((mc, outcome));
    }
    let wall = started.elapsed().as_secs_f64();
    let best = select_best(&runs).expect("at least one cell");
    let (best_config, best_outcome) = &outcomes[best];

    let test_set = generate_test_set(config)?;
    let labels: Vec<bool> = test_set.iter().map(|b| b.label).collect();
    let scores = predict_scores(best_config, &best_outcome.checkpoint.params, &test_set)?;
    let set = ScoredSet::new(&scores, &labels)?;

    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir)?;
    let stem = format!("{}_size{size}_seed{seed}", method.label());
    let checkpoint_path = out_dir.join(format!("{stem}.ckpt"));
    save_checkpoint(&checkpoint_path, best_config, &best_outcome.checkpoint)?;

    let log_path = out_dir.join(format!("{stem}.train_log.csv"));
    let mut log = std::fs::File::create(&log_path)?;
    writeln!(log, "epoch,train_loss,train_auroc,val_auroc")?;
    for rec in &best_outcome.history {
        writeln!(
            log,
            "{},{:.9},{:.6},{:.6}",
            rec.epoch, rec.train_loss, rec.train_auroc, rec.val_auroc
        )?;
    }

    let row = ResultRow {
        method: method.label(),
        ordering: method.ordering.name().to_string(),
        train_size: size,
        seed,
        test_auroc: auroc(&set)?,
        test_auprc: auprc(&set)?,
        wall_time_s: wall,
        best_lr: runs[best].lr,
        best_reg: runs[best].reg_strength,
    };
    Ok(TrainArtifacts {
        row,
        checkpoint_path,
        log_path,
    })
}

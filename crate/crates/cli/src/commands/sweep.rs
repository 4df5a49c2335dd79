//! `milbench sweep`: the train-size scaling experiment.
//!
//! For every (method, size, seed) cell: grid-search on the size-limited
//! pool split 4:1 into train/validation, evaluate the selected checkpoint
//! on the shared test set, and append one result row. Cells already present
//! in results.csv are skipped under `--resume`; a failed cell is logged to
//! failures.log and the sweep continues.

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use mil_core::metrics::{auprc, auroc, ScoredSet};
use mil_core::model::checkpoint::save_checkpoint;
use mil_core::model::{predict_scores, select_best, train, GridRun};
use mil_core::synthgen::Bag;

use crate::config::ExperimentConfig;
use crate::data::{generate_pool, generate_test_set, init_seed, split_pool};
use crate::manifest::SweepManifest;
use crate::results::{append_results, load_results, write_plot_data, ResultRow};

pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
    pub plot_files: Vec<PathBuf>,
}

pub fn cmd_sweep(config: &ExperimentConfig, resume: bool) -> anyhow::Result<SweepOutcome> {
    config.validate()?;
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join("checkpoints"))?;
    let results_path = out_dir.join("results.csv");
    let manifest_path = out_dir.join("manifest.json");

    if manifest_path.exists() {
        SweepManifest::load(&manifest_path)?.check_compatible(config)?;
        if results_path.exists() && !resume {
            anyhow::bail!(
                "{} already holds results; pass --resume to continue or use a fresh directory",
                results_path.display()
            );
        }
    } else {
        SweepManifest::new(config).write(&manifest_path)?;
    }

    let mut existing = load_results(&results_path)?;
    let done: HashSet<_> = existing.iter().map(|r| r.key()).collect();

    let grid_cells: Vec<(f64, f64)> = config
        .grid
        .lrs
        .iter()
        .flat_map(|&lr| config.grid.reg_strengths.iter().map(move |&reg| (lr, reg)))
        .collect();
    let total_runs =
        config.methods.len() * config.sizes.len() * config.seeds.len() * grid_cells.len();
    let completed = AtomicUsize::new(0);
    eprintln!(
        "sweep: {} methods x {} sizes x {} seeds x {} grid cells = {total_runs} training runs",
        config.methods.len(),
        config.sizes.len(),
        config.seeds.len(),
        grid_cells.len()
    );

    let test_set = generate_test_set(config)?;
    let test_labels: Vec<bool> = test_set.iter().map(|b| b.label).collect();

    let mut failures: Vec<String> = Vec::new();
    let mut new_rows_all = Vec::new();

    for &seed in &config.seeds {
        for &size in &config.sizes {
            let pending: Vec<usize> = (0..config.methods.len())
                .filter(|&i| {
                    let key = (
                        config.methods[i].label(),
                        config.methods[i].ordering.name().to_string(),
                        size,
                        seed,
                    );
                    !done.contains(&key)
                })
                .collect();
            if pending.is_empty() {
                completed.fetch_add(config.methods.len() * grid_cells.len(), Ordering::Relaxed);
                continue;
            }
            let pool = generate_pool(config, seed, size)?;
            let (train_set, val_set) = split_pool(config, pool, seed, size)?;

            struct Cell {
                method_idx: usize,
                lr: f64,
                reg: f64,
            }
            let cells: Vec<Cell> = pending
                .iter()
                .flat_map(|&method_idx| {
                    grid_cells.iter().map(move |&(lr, reg)| Cell {
                        method_idx,
                        lr,
                        reg,
                    })
                })
                .collect();

            type CellOutcome = (GridRun, mil_core::model::Checkpoint, f64);
            let outcomes: Vec<(usize, anyhow::Result<CellOutcome>)> = cells
                .par_iter()
                .map(|cell| {
                    let method = &config.methods[cell.method_idx];
                    let mut mc = method.resolve(init_seed(seed, size, cell.method_idx));
                    mc.lr = cell.lr;
                    mc.reg_strength = cell.reg;
                    let started = Instant::now();
                    let result = train(&mc, &train_set, &val_set)
                        .map(|outcome| {
                            (
                                GridRun {
                                    lr: cell.lr,
                                    reg_strength: cell.reg,
                                    val_auroc: outcome.checkpoint.val_auroc,
                                    train_auroc: outcome.checkpoint.train_auroc,
                                    epoch: outcome.checkpoint.epoch,
                                    constraint_met: outcome.checkpoint.constraint_met,
                                },
                                outcome.checkpoint,
                                started.elapsed().as_secs_f64(),
                            )
                        })
                        .map_err(anyhow::Error::from);
                    let done_runs = completed.fetch_add(1, Ordering::Relaxed) + 1;
                    eprintln!(
                        "sweep: run {done_runs}/{total_runs} ({} size {size} seed {seed} lr {} reg {})",
                        method.label(),
                        cell.lr,
                        cell.reg
                    );
                    (cell.method_idx, result)
                })
                .collect();

            let mut group_rows = Vec::new();
            for &method_idx in &pending {
                let method = &config.methods[method_idx];
                let mut runs = Vec::new();
                let mut checkpoints = Vec::new();
                let mut wall = 0.0;
                let mut failed = false;
                for (idx, outcome) in &outcomes {
                    if *idx != method_idx {
                        continue;
                    }
                    match outcome {
                        Ok((run, ckpt, secs)) => {
                            runs.push(run.clone());
                            checkpoints.push(ckpt);
                            wall += secs;
                        }
                        Err(e) => {
                            failures.push(format!(
                                "{} size {size} seed {seed}: {e}",
                                method.label()
                            ));
                            failed = true;
                        }
                    }
                }
                if failed || runs.is_empty() {
                    continue;
                }
                let best = select_best(&runs).expect("non-empty runs");
                let best_ckpt = checkpoints[best];
                let best_run = &runs[best];

                let mut mc = method.resolve(init_seed(seed, size, method_idx));
                mc.lr = best_run.lr;
                mc.reg_strength = best_run.reg_strength;
                let scores = predict_scores(&mc, &best_ckpt.params, &test_set)?;
                let set = ScoredSet::new(&scores, &test_labels)?;
                let row = ResultRow {
                    method: method.label(),
                    ordering: method.ordering.name().to_string(),
                    train_size: size,
                    seed,
                    test_auroc: auroc(&set)?,
                    test_auprc: auprc(&set)?,
                    wall_time_s: wall,
                    best_lr: best_run.lr,
                    best_reg: best_run.reg_strength,
                };
                let ckpt_path = out_dir.join("checkpoints").join(format!(
                    "{}_size{size}_seed{seed}.ckpt",
                    method.label()
                ));
                save_checkpoint(&ckpt_path, &mc, best_ckpt)?;
                group_rows.push(row);
            }
            append_results(&results_path, &existing, &group_rows)?;
            existing.extend(group_rows.iter().cloned());
            new_rows_all.extend(group_rows);
        }
    }

    if !failures.is_empty() {
        let log = failures.join("\n") + "\n";
        std::fs::write(out_dir.join("failures.log"), log)?;
        eprintln!("sweep: {} cell(s) failed; see failures.log", failures.len());
    }

    let plot_files = write_plot_data(out_dir, &existing)?;
    Ok(SweepOutcome {
        rows: existing,
        results_path,
        plot_files,
    })
}

/// Bayes-oracle row on the shared test set, for the same results.csv.
pub fn oracle_row(config: &ExperimentConfig, test_set: &[Bag]) -> anyhow::Result<ResultRow> {
    let started = Instant::now();
    let scores = mil_core::bayes::oracle_scores(test_set, &config.generator)?;
    let labels: Vec<bool> = test_set.iter().map(|b| b.label).collect();
    let set = ScoredSet::new(&scores, &labels)?;
    Ok(ResultRow {
        method: "bayes".into(),
        ordering: "oracle".into(),
        train_size: 0,
        seed: config.data_seed,
        test_auroc: auroc(&set)?,
        test_auprc: auprc(&set)?,
        wall_time_s: started.elapsed().as_secs_f64(),
        best_lr: 0.0,
        best_reg: 0.0,
    })
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mil_bench::commands::{
    cmd_bayes, cmd_eval_attention, cmd_generate, cmd_report, cmd_sweep, cmd_train, write_report,
    AttentionSource,
};
use mil_bench::config::ExperimentConfig;
use mil_bench::results::append_results;

/// Shifted Mean MIL benchmark harness.
#[derive(Parser)]
#[command(name = "milbench", version, about)]
struct Cli {
    /// Experiment config (TOML or JSON); benchmark defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the sweep (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the config's data-split seeds with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/val files per seed plus the shared test set.
    Generate {
        /// Binary (.bin) instead of text (.txt) encoding.
        #[arg(long)]
        binary: bool,
    },
    /// Score a test set with the closed-form Bayes oracle.
    Bayes {
        /// Dataset file (.txt or .bin); generated from the config if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Append the oracle row to this results.csv.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Train one method at one train-pool size and seed.
    Train {
        /// Method label from the config (e.g. mean, smap, transmil, abmil-pred).
        #[arg(long)]
        method: String,
        /// Train-pool size (train+validation together).
        #[arg(long)]
        size: usize,
        /// Run the full lr x reg grid instead of a single cell.
        #[arg(long)]
        grid: bool,
    },
    /// The full train-size sweep: every (method, size, seed) cell.
    Sweep {
        /// Continue an interrupted sweep, skipping completed rows.
        #[arg(long)]
        resume: bool,
    },
    /// Instance-level attention quality over positive test bags.
    EvalAttention {
        /// Trained checkpoint (.ckpt with its manifest next to it).
        #[arg(long, conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the image-independent centered-Gaussian baseline.
        #[arg(long)]
        baseline: bool,
        /// Relative width of the Gaussian bell (std = rel_width x S).
        #[arg(long, default_value_t = 0.25)]
        rel_width: f64,
        /// Dataset file; the config's test set if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output prefix for the .csv/.json report.
        #[arg(long, default_value = "attention_report")]
        report: PathBuf,
    },
    /// Summarize a results.csv into per-method curves and a table.
    Report {
        /// results.csv produced by `sweep` (default: <out>/results.csv).
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Generate { binary } => {
            let config = load_config(&cli)?;
            let files = cmd_generate(&config, &config.output_dir, *binary)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Bayes { data, results } => {
            let config = load_config(&cli)?;
            let row = cmd_bayes(&config, data.as_deref())?;
            println!(
                "bayes oracle: AUROC {:.4}  AUPRC {:.4}  ({:.2} s)",
                row.test_auroc, row.test_auprc, row.wall_time_s
            );
            if let Some(path) = results {
                let existing = mil_bench::results::load_results(path)?;
                append_results(path, &existing, std::slice::from_ref(&row))?;
                println!("appended to {}", path.display());
            }
        }
        Command::Train { method, size, grid } => {
            let config = load_config(&cli)?;
            let seed = *config.seeds.first().expect("validated: seeds non-empty");
            let artifacts = cmd_train(&config, method, *size, seed, *grid)?;
            println!(
                "{} size {} seed {}: test AUROC {:.4}  AUPRC {:.4}  (lr {}, reg {})",
                artifacts.row.method,
                artifacts.row.train_size,
                artifacts.row.seed,
                artifacts.row.test_auroc,
                artifacts.row.test_auprc,
                artifacts.row.best_lr,
                artifacts.row.best_reg
            );
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            println!("training log: {}", artifacts.log_path.display());
        }
        Command::Sweep { resume } => {
            let config = load_config(&cli)?;
            let outcome = cmd_sweep(&config, *resume)?;
            println!(
                "sweep complete: {} rows in {}",
                outcome.rows.len(),
                outcome.results_path.display()
            );
            for f in outcome.plot_files {
                println!("plot data: {}", f.display());
            }
        }
        Command::EvalAttention {
            checkpoint,
            baseline,
            rel_width,
            data,
            report,
        } => {
            let config = load_config(&cli)?;
            let source = match (checkpoint, baseline) {
                (Some(path), false) => AttentionSource::Checkpoint(path.clone()),
                (None, true) => AttentionSource::CenteredGaussian {
                    rel_width: *rel_width,
                },
                (None, false) => anyhow::bail!("pass --checkpoint <file> or --baseline"),
                (Some(_), true) => unreachable!("clap forbids the combination"),
            };
            let metric_report = cmd_eval_attention(&config, &source, data.as_deref())?;
            let inst = metric_report.instance.expect("attention evaluation ran");
            println!(
                "{} attention over {} positive bags: correctness {:.4}  AUROC {:.4}  AUPRC {:.4}",
                metric_report.method,
                inst.n_bags,
                inst.attention_correctness,
                inst.instance_auroc,
                inst.instance_auprc
            );
            let (csv, json) = write_report(&metric_report, report)?;
            println!("report: {} and {}", csv.display(), json.display());
        }
        Command::Report { results } => {
            let config = load_config(&cli)?;
            let results_path = results
                .clone()
                .unwrap_or_else(|| config.output_dir.join("results.csv"));
            let outcome = cmd_report(&results_path, &config.output_dir)?;
            print!("{}", outcome.table);
            println!("summary: {}", outcome.summary_path.display());
        }
    }
    Ok(())
}

/// Exit codes: 0 ok, 1 usage, 2 IO, 3 data/config mismatch.
fn classify(error: &anyhow::Error) -> u8 {
    for cause in error.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<mil_core::Error>() {
            return match core {
                mil_core::Error::Io(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; anything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

//! `milbench report`: summarize a results.csv into per-method curves and a
//! mean±std table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mil_core::metrics::{mean_std, MeanStd};

use crate::results::{load_results, write_plot_data, ResultRow};

pub struct ReportOutcome {
    pub plot_files: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub table: String,
}

pub fn cmd_report(results_path: &Path, out_dir: &Path) -> anyhow::Result<ReportOutcome> {
    let rows = load_results(results_path)?;
    if rows.is_empty() {
        anyhow::bail!("{} holds no result rows", results_path.display());
    }
    std::fs::create_dir_all(out_dir)?;
    let plot_files = write_plot_data(out_dir, &rows)?;

    let mut by_method: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for row in &rows {
        by_method
            .entry(row.method.clone())
            .or_default()
            .entry(row.train_size)
            .or_default()
            .push(row.test_auroc);
    }
    let summary: BTreeMap<String, BTreeMap<usize, MeanStd>> = by_method
        .iter()
        .map(|(m, sizes)| {
            (
                m.clone(),
                sizes
                    .iter()
                    .map(|(&s, values)| (s, mean_std(values)))
                    .collect(),
            )
        })
        .collect();
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    let mut table = String::from("method            size    auroc mean ± std (seeds)\n");
    for (method, sizes) in &summary {
        for (size, ms) in sizes {
            let n = by_method[method][size].len();
            table.push_str(&format!(
                "{method:<16} {size:>6}    {:.4} ± {:.4} ({n})\n",
                ms.mean, ms.std
            ));
        }
    }
    Ok(ReportOutcome {
        plot_files,
        summary_path,
        table,
    })
}

/// Test-AUROC means per method at one size, for quick comparisons.
pub fn method_means_at(rows: &[ResultRow], size: usize) -> BTreeMap<String, MeanStd> {
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.train_size == size) {
        by_method
            .entry(row.method.clone())
            .or_default()
            .push(row.test_auroc);
    }
    by_method
        .into_iter()
        .map(|(m, v)| (m, mean_std(&v)))
        .collect()
}

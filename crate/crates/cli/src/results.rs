//! Result rows, the append-only results.csv, and plot-data emission.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use mil_core::metrics::mean_std;

pub const RESULTS_HEADER: &str =
    "method,ordering,train_size,seed,test_auroc,test_auprc,wall_time_s,best_lr,best_reg";

/// One completed (method, size, seed) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub ordering: String,
    pub train_size: usize,
    pub seed: u64,
    pub test_auroc: f64,
    pub test_auprc: f64,
    pub wall_time_s: f64,
    pub best_lr: f64,
    pub best_reg: f64,
}

impl ResultRow {
    /// Unique key; results.csv holds at most one row per key.
    pub fn key(&self) -> (String, String, usize, u64) {
        (
            self.method.clone(),
            self.ordering.clone(),
            self.train_size,
            self.seed,
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.3},{},{}",
            self.method,
            self.ordering,
            self.train_size,
            self.seed,
            self.test_auroc,
            self.test_auprc,
            self.wall_time_s,
            self.best_lr,
            self.best_reg
        )
    }

    pub fn from_csv(line: &str) -> anyhow::Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            anyhow::bail!("results row needs 9 fields: {line:?}");
        }
        Ok(Self {
            method: fields[0].to_string(),
            ordering: fields[1].to_string(),
            train_size: fields[2].parse()?,
            seed: fields[3].parse()?,
            test_auroc: fields[4].parse()?,
            test_auprc: fields[5].parse()?,
            wall_time_s: fields[6].parse()?,
            best_lr: fields[7].parse()?,
            best_reg: fields[8].parse()?,
        })
    }
}

/// Loads existing rows (tolerates a missing file) for resume support.
pub fn load_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != RESULTS_HEADER {
                anyhow::bail!("unexpected results.csv header: {line:?}");
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(ResultRow::from_csv(line)?);
    }
    Ok(rows)
}

/// Appends rows, writing the header when the file is new, and refusing
/// duplicate keys.
pub fn append_results(path: &Path, existing: &[ResultRow], new_rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut seen: HashSet<_> = existing.iter().map(|r| r.key()).collect();
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(file, "{RESULTS_HEADER}")?;
    }
    for row in new_rows {
        if !seen.insert(row.key()) {
            anyhow::bail!("duplicate result row for {:?}", row.key());
        }
        writeln!(file, "{}", row.to_csv())?;
    }
    file.flush()?;
    Ok(())
}

/// Writes one TSV per method: `size  mean_auroc  std_auroc` across seeds.
pub fn write_plot_data(dir: &Path, rows: &[ResultRow]) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let mut by_method: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for row in rows {
        by_method
            .entry(row.method.clone())
            .or_default()
            .entry(row.train_size)
            .or_default()
            .push(row.test_auroc);
    }
    let mut written = Vec::new();
    for (method, sizes) in by_method {
        let path = dir.join(format!("curve_{method}.tsv"));
        let mut out = String::from("size\tmean_auroc\tstd_auroc\n");
        for (size, values) in sizes {
            let ms = mean_std(&values);
            out.push_str(&format!("{size}\t{:.6}\t{:.6}\n", ms.mean, ms.std));
        }
        std::fs::write(&path, out)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, size: usize, seed: u64, auroc: f64) -> ResultRow {
        ResultRow {
            method: method.into(),
            ordering: "embedding-aggregation".into(),
            train_size: size,
            seed,
            test_auroc: auroc,
            test_auprc: auroc - 0.05,
            wall_time_s: 1.5,
            best_lr: 0.01,
            best_reg: 0.001,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let r = row("mean", 100, 2, 0.8123456);
        let parsed = ResultRow::from_csv(&r.to_csv()).unwrap();
        assert_eq!(parsed.method, "mean");
        assert_eq!(parsed.train_size, 100);
        assert!((parsed.test_auroc - 0.812346).abs() < 1e-9); // 6-digit format
    }

    #[test]
    fn append_and_reload() {
        let dir = std::env::temp_dir().join(format!("mil-results-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("results.csv");
        std::fs::remove_file(&path).ok();
        let rows = vec![row("mean", 100, 0, 0.7), row("mean", 100, 1, 0.72)];
        append_results(&path, &[], &rows).unwrap();
        let loaded = load_results(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        // Appending a duplicate key fails.
        assert!(append_results(&path, &loaded, &[row("mean", 100, 0, 0.9)]).is_err());
        // Appending a new key succeeds.
        append_results(&path, &loaded, &[row("smap", 100, 0, 0.71)]).unwrap();
        assert_eq!(load_results(&path).unwrap().len(), 3);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn plot_data_aggregates_across_seeds() {
        let dir = std::env::temp_dir().join(format!("mil-plot-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let rows = vec![
            row("mean", 100, 0, 0.7),
            row("mean", 100, 1, 0.8),
            row("mean", 1000, 0, 0.9),
        ];
        let files = write_plot_data(&dir, &rows).unwrap();
        assert_eq!(files.len(), 1);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "size\tmean_auroc\tstd_auroc");
        assert!(lines[1].starts_with("100\t0.750000"));
        assert!(lines[2].starts_with("1000\t0.900000\t0.000000"));
        std::fs::remove_dir_all(&dir).ok();
    }
}

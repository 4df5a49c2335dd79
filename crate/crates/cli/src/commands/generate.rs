//! `milbench generate`: materialize datasets on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mil_core::synthgen::format::write_dataset;

use crate::config::ExperimentConfig;
use crate::data::{generate_pool, generate_test_set, split_pool};
use crate::manifest::config_hash;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub config_sha256: String,
    pub generator: mil_core::synthgen::GeneratorParams,
    pub seeds: Vec<u64>,
    pub pool_size: usize,
    pub test_size: usize,
    pub format: String,
    pub test_file: String,
    pub per_seed_files: Vec<(u64, String, String)>,
}

/// Writes the shared test set plus per-seed train/validation files, and a
/// manifest that pins the whole generation.
pub fn cmd_generate(
    config: &ExperimentConfig,
    out_dir: &Path,
    binary: bool,
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let ext = if binary { "bin" } else { "txt" };
    let r = config.generator.r;
    let mut written = Vec::new();

    let test_name = format!("test.{ext}");
    let test_set = generate_test_set(config)?;
    write_dataset(&out_dir.join(&test_name), &test_set, r)?;
    written.push(out_dir.join(&test_name));
    drop(test_set);

    let pool_size = *config.sizes.last().expect("validated: sizes non-empty");
    let mut per_seed_files = Vec::new();
    for &seed in &config.seeds {
        let pool = generate_pool(config, seed, pool_size)?;
        let (train, val) = split_pool(config, pool, seed, pool_size)?;
        let train_name = format!("train_seed{seed}.{ext}");
        let val_name = format!("val_seed{seed}.{ext}");
        write_dataset(&out_dir.join(&train_name), &train, r)?;
        write_dataset(&out_dir.join(&val_name), &val, r)?;
        written.push(out_dir.join(&train_name));
        written.push(out_dir.join(&val_name));
        per_seed_files.push((seed, train_name, val_name));
    }

    let manifest = GenerateManifest {
        config_sha256: config_hash(config),
        generator: config.generator.clone(),
        seeds: config.seeds.clone(),
        pool_size,
        test_size: config.test_size,
        format: ext.to_string(),
        test_file: test_name,
        per_seed_files,
    };
    let manifest_path = out_dir.join("dataset_manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(manifest_path);
    Ok(written)
}

//! Deterministic data plumbing: the stream layout that makes every
//! command reproducible from the manifest alone.

use mil_core::numerics::rng::SeededRng;
use mil_core::synthgen::{sample_dataset, split, Bag, SplitSpec};

use crate::config::ExperimentConfig;

// Stream tags: one per role so no two draws ever share a stream.
const STREAM_TEST: u64 = 0xA11CE;
const STREAM_POOL: u64 = 0xB0BA;
const STREAM_SPLIT: u64 = 0xC0DE;

/// The shared held-out test set (identical across data-split seeds).
pub fn generate_test_set(config: &ExperimentConfig) -> anyhow::Result<Vec<Bag>> {
    Ok(sample_dataset(
        &config.generator,
        config.test_size,
        &SeededRng::new(config.data_seed, STREAM_TEST),
    )?)
}

/// The training pool for one data-split seed. Pools of different sizes from
/// the same seed are prefixes of each other.
pub fn generate_pool(config: &ExperimentConfig, seed: u64, size: usize) -> anyhow::Result<Vec<Bag>> {
    Ok(sample_dataset(
        &config.generator,
        size,
        &SeededRng::new(seed, STREAM_POOL),
    )?)
}

/// Splits a pool into train/validation for one (seed, size) cell.
pub fn split_pool(
    config: &ExperimentConfig,
    pool: Vec<Bag>,
    seed: u64,
    size: usize,
) -> anyhow::Result<(Vec<Bag>, Vec<Bag>)> {
    let spec = SplitSpec {
        train_fraction: config.train_fraction,
        seed,
        test_size: config.test_size,
    };
    let mut rng = SeededRng::new(seed, STREAM_SPLIT).derive(size as u64);
    Ok(split(pool, &spec, &mut rng)?)
}

/// Stable model-init seed for one (seed, size, method) cell.
pub fn init_seed(seed: u64, size: usize, method_index: usize) -> u64 {
    let mut x = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(size as u64)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9)
        .wrapping_add(method_index as u64);
    x ^= x >> 31;
    x
}

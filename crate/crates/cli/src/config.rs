//! Experiment configuration: a single TOML or JSON file with the benchmark
//! defaults baked in, overridable field by field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mil_core::model::{ArchOrdering, GridSpec, ModelConfig, RegKind};
use mil_core::pooling::{PoolKind, TransmilConfig};
use mil_core::synthgen::GeneratorParams;

/// One (pooling, ordering) entry of the method list. Unset training knobs
/// fall back to [`MethodSpec::resolve`] defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub pooling: PoolKind,
    #[serde(default = "default_ordering")]
    pub ordering: ArchOrdering,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub reg_kind: Option<RegKind>,
    #[serde(default)]
    pub attention_hidden: Option<usize>,
    #[serde(default)]
    pub smap_alpha: Option<f64>,
    #[serde(default)]
    pub smap_neighbors: Option<usize>,
    #[serde(default)]
    pub transmil: Option<TransmilConfig>,
    #[serde(default)]
    pub eval_every: Option<usize>,
}

fn default_ordering() -> ArchOrdering {
    ArchOrdering::EmbeddingAggregation
}

impl MethodSpec {
    pub fn new(pooling: PoolKind) -> Self {
        Self {
            pooling,
            ordering: default_ordering(),
            epochs: None,
            batch_size: None,
            reg_kind: None,
            attention_hidden: None,
            smap_alpha: None,
            smap_neighbors: None,
            transmil: None,
            eval_every: None,
        }
    }

    /// Stable identifier used in result rows and file names.
    pub fn label(&self) -> String {
        match self.ordering {
            ArchOrdering::EmbeddingAggregation => self.pooling.name().to_string(),
            ArchOrdering::PredictionAggregation => format!("{}-pred", self.pooling.name()),
        }
    }

    /// Concrete training configuration for one run.
    pub fn resolve(&self, init_seed: u64) -> ModelConfig {
        ModelConfig {
            ordering: self.ordering,
            pooling: self.pooling,
            reg_kind: self.reg_kind.unwrap_or(RegKind::L2),
            reg_strength: 0.0,
            lr: 0.01,
            momentum: 0.9,
            batch_size: self.batch_size.unwrap_or(64),
            epochs: self.epochs.unwrap_or(100),
            init_seed,
            attention_hidden: self.attention_hidden.unwrap_or(32),
            smap_alpha: self.smap_alpha.unwrap_or(0.5),
            smap_neighbors: self.smap_neighbors.unwrap_or(1),
            transmil: self.transmil.unwrap_or_default(),
            eval_every: self.eval_every.unwrap_or(0),
        }
    }
}

/// Everything a sweep needs; every constant defaults to the benchmark
/// configuration (balanced classes, bags of 20-60 instances, a 12-instance
/// segment shifting the first of 768 features by 0.5, a fixed 1,000-bag
/// test set, three data-split seeds, and the 4x8 hyperparameter grids).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GeneratorParams,
    /// Train-pool sizes of the scaling sweep (train+validation together).
    pub sizes: Vec<usize>,
    pub test_size: usize,
    pub methods: Vec<MethodSpec>,
    pub grid: GridSpec,
    /// Data-split seeds; each regenerates its own training pool and split.
    pub seeds: Vec<u64>,
    /// Master seed for the shared test set.
    pub data_seed: u64,
    pub train_fraction: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorParams::default(),
            sizes: vec![100, 200, 500, 1000, 2000, 5000, 10000],
            test_size: 1000,
            methods: vec![
                MethodSpec::new(PoolKind::Mean),
                MethodSpec::new(PoolKind::Smap),
                MethodSpec::new(PoolKind::Transmil),
            ],
            grid: GridSpec::default(),
            seeds: vec![0, 1, 2],
            data_seed: 20_240_601,
            train_fraction: 0.8,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.generator.validate()?;
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            anyhow::bail!("sizes must be non-empty and strictly ascending");
        }
        if self.seeds.is_empty() {
            anyhow::bail!("at least one data-split seed is required");
        }
        if self.methods.is_empty() {
            anyhow::bail!("at least one method is required");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            anyhow::bail!("train_fraction must be in (0,1)");
        }
        if self.test_size == 0 {
            anyhow::bail!("test_size must be positive");
        }
        for m in &self.methods {
            m.resolve(0).validate()?;
        }
        Ok(())
    }

    /// Canonical JSON used for the manifest and the reproducibility hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_benchmark_constants() {
        let c = ExperimentConfig::default();
        assert_eq!(c.generator.q_pos, 0.5);
        assert_eq!((c.generator.s_low, c.generator.s_high), (20, 60));
        assert_eq!(c.generator.r, 12);
        assert_eq!(c.generator.delta, 0.5);
        assert_eq!((c.generator.m, c.generator.k), (768, 1));
        assert_eq!(c.test_size, 1000);
        assert_eq!(c.seeds.len(), 3);
        assert_eq!(c.grid.lrs, vec![0.1, 0.01, 0.001, 0.0001]);
        assert_eq!(
            c.grid.reg_strengths,
            vec![1.0, 0.1, 0.01, 0.001, 0.0001, 1e-5, 1e-6, 0.0]
        );
        assert_eq!(c.sizes.first(), Some(&100));
        assert_eq!(c.sizes.last(), Some(&10000));
    }

    #[test]
    fn toml_roundtrip_and_overrides() {
        let toml_text = r#"
            sizes = [50, 100]
            seeds = [7]
            test_size = 40

            [generator]
            m = 16
            s_low = 4
            s_high = 9
            r = 2

            [[methods]]
            pooling = "mean"
            epochs = 5

            [[methods]]
            pooling = "abmil"
            ordering = "prediction-aggregation"

            [grid]
            lrs = [0.01]
            reg_strengths = [0.0]
        "#;
        let config: ExperimentConfig = toml::from_str(toml_text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.generator.m, 16);
        assert_eq!(config.methods[0].epochs, Some(5));
        assert_eq!(config.methods[1].label(), "abmil-pred");
        assert_eq!(config.methods[1].resolve(3).batch_size, 64);
        // Unset generator fields keep the benchmark defaults.
        assert_eq!(config.generator.delta, 0.5);
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut c = ExperimentConfig::default();
        c.sizes = vec![100, 100];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.methods = vec![MethodSpec {
            ordering: ArchOrdering::PredictionAggregation,
            ..MethodSpec::new(PoolKind::Transmil)
        }];
        assert!(c.validate().is_err());
    }
}

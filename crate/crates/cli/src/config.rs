use std::path::Path;

use aoi_core::nn::{ModelSpec, TrainConfig};
use aoi_core::pipeline::{AugmentConfig, BenchmarkConfig};
use aoi_core::synthgen::DatasetSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Crop split proportions and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.62,
            val: 0.20,
            seed: 0x5B1,
        }
    }
}

/// Everything a subcommand may read. Built from defaults, then the config
/// file, then command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Seed of the classifier's initial weights.
    pub model_seed: u64,
    pub gen: DatasetSpec,
    pub bench: BenchmarkConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub split: SplitConfig,
    pub model: ModelSpec,
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: aoi_core::Error| CliError::usage(e.to_string());
        self.gen.validate().map_err(usage)?;
        self.bench.pipeline.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.augment.validate().map_err(usage)?;
        self.model.shape_trace().map_err(usage)?;
        let s = &self.split;
        if !(s.train > 0.0 && s.val >= 0.0 && s.train + s.val < 1.0) {
            return Err(CliError::usage(format!(
                "split fractions train {} + val {} must leave a test share",
                s.train, s.val
            )));
        }
        Ok(())
    }
}

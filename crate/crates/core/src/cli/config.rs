//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DEFAULT_RATIOS;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Execution};
use crate::fedsim::FedConfig;
use crate::models::{Family, ModelSpec, DEFAULT_DROPOUT};
use crate::synthgen::SynthConfig;
use crate::train::TrainConfig;

/// Where the samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Output directory of `prepare`.
    Prepared(PathBuf),
    /// A raw dataset file, filtered and split on the fly.
    Dataset(PathBuf),
    Synth(SynthConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Family defaults when absent. For `deep_res_mlp`: `[width, blocks]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: Family::Mlp,
            hidden: None,
            dropout_p: DEFAULT_DROPOUT,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, output_dim: usize) -> Result<ModelSpec> {
        let spec = match &self.hidden {
            Some(h) => ModelSpec::new(self.family, input_dim, output_dim, h.clone()),
            None => ModelSpec::with_defaults(self.family, input_dim, output_dim),
        }
        .with_dropout(self.dropout_p);
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub min_count: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: DEFAULT_RATIOS,
            min_count: 200,
        }
    }
}

/// One experiment. Present `federated` settings select federated mode,
/// otherwise training is centralized. `train.seed` and `federated.seed` are
/// always derived from `seed` and the repeat index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub federated: Option<FedConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub n_repeats: usize,
    #[serde(default)]
    pub topk: Vec<usize>,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

const MODEL_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const PARTITION_STREAM: u64 = 3;
const FED_STREAM: u64 = 4;

/// Seeds for one repeat.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepeatSeeds {
    pub split: u64,
    pub model: u64,
    pub train: u64,
    pub partition: u64,
    pub federation: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be >= 1".into()));
        }
        let r = self.split.ratios;
        if r.iter().any(|v| v.is_nan() || *v <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {r:?} must be positive and sum to 1")));
        }
        if self.topk.contains(&0) {
            return Err(Error::Config("topk values must be >= 1".into()));
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        self.train.validate()?;
        if let Some(f) = &self.federated {
            f.validate()?;
        }
        Ok(())
    }

    pub fn is_federated(&self) -> bool {
        self.federated.is_some()
    }

    pub fn seeds(&self, repeat: usize) -> RepeatSeeds {
        let base = self.seed.wrapping_add(repeat as u64);
        RepeatSeeds {
            split: base,
            model: derive_seed(base, &[MODEL_STREAM]),
            train: derive_seed(base, &[TRAIN_STREAM]),
            partition: derive_seed(base, &[PARTITION_STREAM]),
            federation: derive_seed(base, &[FED_STREAM]),
        }
    }

    /// Fills derived seeds, absolute paths and execution settings so the
    /// written config replays the same run.
    pub fn resolve(mut self) -> Result<Self> {
        self.validate()?;
        match &mut self.data {
            DataSource::Prepared(p) | DataSource::Dataset(p) => *p = absolute(p)?,
            DataSource::Synth(_) => {}
        }
        if let Some(out) = &self.output_dir {
            self.output_dir = Some(absolute(out)?);
        }
        let seeds = self.seeds(0);
        self.train.seed = seeds.train;
        let execution = self.execution;
        if let Some(f) = &mut self.federated {
            f.seed = seeds.federation;
            f.execution = execution;
        }
        Ok(self)
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    if p.is_absolute() {
        return Ok(p.to_path_buf());
    }
    Ok(std::env::current_dir()?.join(p))
}

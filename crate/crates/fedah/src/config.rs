//! Experiment files: TOML with a fixed set of sections and keys.
//!
//! ```toml
//! output_dir = "results"
//! methods = ["fedavg", "fedrep", "fedah"]
//! seeds = [1, 2, 3, 4, 5]
//!
//! [dataset]
//! kind = "synthetic"        # or "idx" with `images` and `labels` paths
//! n_classes = 10
//! dim = 32
//! per_class = 200
//! separation = 2.0
//! seed = 1
//!
//! [model]
//! hidden = [64, 32]
//!
//! [partition]
//! mode = "dirichlet"        # or "pathological" with `classes_per_client`
//! n_clients = 20
//! beta = 0.1
//! seed = 42
//!
//! [rounds]
//! total_rounds = 100
//! join_ratio = 1.0          # or join_ratio_range = [0.1, 1.0]
//! local_lr = 0.005
//! ```
//!
//! Relative paths are taken from the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use fedah_core::data::{generate_synthetic, DEFAULT_MIN_SAMPLES, DEFAULT_TEST_FRACTION};
use fedah_core::{
    ExperimentSpec, JoinRatio, LabeledDataset, Method, PartitionMode, PartitionSpec, RoundConfig,
};
use serde::{Deserialize, Serialize};

use crate::dataset::load_idx;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Also write `curves.svg`.
    #[serde(default = "yes")]
    pub plot: bool,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub rounds: RoundsConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.as_str().to_string()).collect()
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Idx(IdxConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Extractor widths; the last is the representation size.
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    Dirichlet,
    Pathological,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: PartitionKind,
    pub n_clients: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes_per_client: Option<usize>,
    #[serde(default = "default_min_samples")]
    pub min_samples_per_client: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_min_samples() -> usize {
    DEFAULT_MIN_SAMPLES
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoundsConfig {
    pub total_rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub join_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub join_ratio_range: Option<[f64; 2]>,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    /// Defaults to `local_lr`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_lr: Option<f64>,
    pub weight_init: f64,
    pub eval_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
}

impl Default for RoundsConfig {
    fn default() -> Self {
        let d = RoundConfig::default();
        Self {
            total_rounds: d.total_rounds,
            join_ratio: None,
            join_ratio_range: None,
            local_epochs: d.local_epochs,
            batch_size: d.batch_size,
            local_lr: d.local_lr,
            weight_lr: d.weight_lr,
            weight_init: d.weight_init,
            eval_every: d.eval_every,
            early_stop_patience: d.early_stop_patience,
        }
    }
}

impl RoundsConfig {
    pub fn join_ratio(&self) -> Result<JoinRatio> {
        match (self.join_ratio, self.join_ratio_range) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "set either rounds.join_ratio or rounds.join_ratio_range, not both".into(),
            )),
            (Some(r), None) => Ok(JoinRatio::Fixed(r)),
            (None, Some([low, high])) => Ok(JoinRatio::Range { low, high }),
            (None, None) => Ok(JoinRatio::Fixed(1.0)),
        }
    }

    pub fn round_config(&self, master_seed: u64) -> Result<RoundConfig> {
        let cfg = RoundConfig {
            total_rounds: self.total_rounds,
            join_ratio: self.join_ratio()?,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            local_lr: self.local_lr,
            weight_lr: self.weight_lr,
            weight_init: self.weight_init,
            eval_every: self.eval_every,
            early_stop_patience: self.early_stop_patience,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl PartitionConfig {
    pub fn spec(&self) -> Result<PartitionSpec> {
        let mode = match (self.mode, self.beta, self.classes_per_client) {
            (PartitionKind::Dirichlet, Some(beta), None) => PartitionMode::Dirichlet { beta },
            (PartitionKind::Pathological, None, Some(classes_per_client)) => {
                PartitionMode::Pathological { classes_per_client }
            }
            (PartitionKind::Dirichlet, _, _) => {
                return Err(CliError::Config(
                    "partition mode `dirichlet` needs `beta` and no `classes_per_client`".into(),
                ))
            }
            (PartitionKind::Pathological, _, _) => {
                return Err(CliError::Config(
                    "partition mode `pathological` needs `classes_per_client` and no `beta`".into(),
                ))
            }
        };
        Ok(PartitionSpec {
            mode,
            n_clients: self.n_clients,
            min_samples_per_client: self.min_samples_per_client,
            seed: self.seed,
        })
    }
}

/// A parsed config plus the directory its relative paths hang off.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Loaded> {
        let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        let config =
            Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base_dir })
    }

    /// Distinct methods, sorted by id so outputs have a fixed order.
    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(CliError::Config("`methods` is empty".into()));
        }
        let mut methods = self
            .methods
            .iter()
            .map(|s| s.parse::<Method>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        methods.sort_by_key(|m| m.as_str());
        methods.dedup();
        Ok(methods)
    }

    /// Distinct seeds, ascending.
    pub fn seeds(&self) -> Result<Vec<u64>> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("`seeds` is empty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        Ok(seeds)
    }

    pub fn experiment_spec(&self, master_seed: u64) -> Result<ExperimentSpec> {
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(CliError::Config(
                "model.hidden needs at least one non-zero width".into(),
            ));
        }
        if !(self.partition.test_fraction > 0.0 && self.partition.test_fraction < 1.0) {
            return Err(CliError::Config(
                "partition.test_fraction must be in (0, 1)".into(),
            ));
        }
        Ok(ExperimentSpec {
            hidden: self.model.hidden.clone(),
            partition: self.partition.spec()?,
            rounds: self.rounds.round_config(master_seed)?,
            test_fraction: self.partition.test_fraction,
        })
    }
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        match &self.config.dataset {
            DatasetConfig::Synthetic(s) => Ok(generate_synthetic(
                s.n_classes,
                s.dim,
                s.per_class,
                s.separation,
                s.seed,
            )?),
            DatasetConfig::Idx(i) => load_idx(&self.resolve(&i.images), &self.resolve(&i.labels)),
        }
    }
}

//! Experiment configuration: a small TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use varadam::{HyperParams, OptimizerKind};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetChoice {
    Mnist,
    Synthetic,
}

impl std::fmt::Display for DatasetChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetChoice::Mnist => "mnist",
            DatasetChoice::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Lr,
    Mlp,
}

impl std::fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelChoice::Lr => "lr",
            ModelChoice::Mlp => "mlp",
        })
    }
}

/// Parameters of the generated quadratic population.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_synth_batches")]
    pub batches: usize,
    #[serde(default = "default_synth_dim")]
    pub dim: usize,
    #[serde(default = "default_synth_spread")]
    pub spread: f64,
}

fn default_synth_batches() -> usize {
    8
}
fn default_synth_dim() -> usize {
    10
}
fn default_synth_spread() -> f64 {
    1.0
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            batches: default_synth_batches(),
            dim: default_synth_dim(),
            spread: default_synth_spread(),
        }
    }
}

/// Optional hyperparameter table in the config file; unset fields fall back
/// to the experiment defaults.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHyperParams {
    alpha: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    eta: Option<f64>,
    weight_decay: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: Option<DatasetChoice>,
    model: Option<ModelChoice>,
    optimizer: Option<String>,
    epochs: Option<u32>,
    batch_size: Option<usize>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    shuffle: Option<bool>,
    record_timing: Option<bool>,
    #[serde(default)]
    hyperparams: RawHyperParams,
    synthetic: Option<SyntheticConfig>,
}

/// A fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetChoice,
    pub model: ModelChoice,
    pub optimizer: OptimizerKind,
    pub hp: HyperParams,
    pub epochs: u32,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub shuffle: bool,
    pub record_timing: bool,
    pub synthetic: SyntheticConfig,
}

/// Field-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub optimizer: Option<OptimizerKind>,
    pub eta: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

/// Known-good confidence settings per (dataset, model, optimizer, batch
/// size), used whenever the config does not pin `eta` explicitly.
pub fn default_eta(
    dataset: DatasetChoice,
    model: ModelChoice,
    optimizer: OptimizerKind,
    batch_size: usize,
) -> Option<f64> {
    use DatasetChoice::Mnist;
    use ModelChoice::{Lr, Mlp};
    use OptimizerKind::{AdamCb, AdamS, AdamUcb};
    match (dataset, model, optimizer, batch_size) {
        (Mnist, Lr, AdamUcb, 128) => Some(0.01),
        (Mnist, Lr, AdamCb, 128) => Some(0.001),
        (Mnist, Lr, AdamS, 128) => Some(0.0001),
        (Mnist, Mlp, AdamUcb, 128) => Some(0.1),
        (Mnist, Mlp, AdamCb, 128) => Some(0.001),
        (Mnist, Mlp, AdamS, 128) => Some(0.005),
        (Mnist, Mlp, AdamUcb, 16) => Some(0.3),
        (Mnist, Mlp, AdamCb, 16) => Some(0.0001),
        (Mnist, Mlp, AdamS, 16) => Some(0.05),
        _ => None,
    }
}

impl ExperimentConfig {
    /// The all-defaults configuration: one pass of Adam over the digit data
    /// with the standard settings.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self, HarnessError> {
        let raw: RawConfig = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                toml::from_str(&text).map_err(|e| HarnessError::Config {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?
            }
            None => RawConfig {
                dataset: None,
                model: None,
                optimizer: None,
                epochs: None,
                batch_size: None,
                seeds: None,
                output_dir: None,
                data_dir: None,
                shuffle: None,
                record_timing: None,
                hyperparams: RawHyperParams::default(),
                synthetic: None,
            },
        };

        let dataset = raw.dataset.unwrap_or(DatasetChoice::Mnist);
        let model = raw.model.unwrap_or(ModelChoice::Lr);
        let optimizer = match &overrides.optimizer {
            Some(kind) => *kind,
            None => match &raw.optimizer {
                Some(name) => name
                    .parse()
                    .map_err(|message| HarnessError::Config {
                        path: file.map(Path::to_path_buf).unwrap_or_default(),
                        message,
                    })?,
                None => OptimizerKind::Adam,
            },
        };
        let epochs = overrides.epochs.or(raw.epochs).unwrap_or(45);
        let batch_size = overrides.batch_size.or(raw.batch_size).unwrap_or(128);
        let seeds = overrides
            .seeds
            .clone()
            .or(raw.seeds)
            .unwrap_or_else(|| vec![1, 2, 3]);
        let eta = overrides
            .eta
            .or(raw.hyperparams.eta)
            .or_else(|| default_eta(dataset, model, optimizer, batch_size))
            .unwrap_or(0.0);
        let hp = HyperParams {
            alpha: raw.hyperparams.alpha.unwrap_or(1e-3),
            beta1: raw.hyperparams.beta1.unwrap_or(0.9),
            beta2: raw.hyperparams.beta2.unwrap_or(0.999),
            eps: raw.hyperparams.eps.unwrap_or(1e-8),
            eta,
            weight_decay: raw.hyperparams.weight_decay.unwrap_or(1e-4),
        };

        let config = Self {
            dataset,
            model,
            optimizer,
            hp,
            epochs,
            batch_size,
            seeds,
            output_dir: overrides
                .output_dir
                .clone()
                .or(raw.output_dir)
                .unwrap_or_else(|| PathBuf::from("runs")),
            data_dir: overrides
                .data_dir
                .clone()
                .or(raw.data_dir)
                .unwrap_or_else(|| PathBuf::from("data/mnist")),
            shuffle: raw.shuffle.unwrap_or(true),
            record_timing: raw.record_timing.unwrap_or(true),
            synthetic: raw.synthetic.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |message: String| {
            Err(HarnessError::Config {
                path: PathBuf::new(),
                message,
            })
        };
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.synthetic.batches < 1 || self.synthetic.dim < 1 {
            return bad("synthetic population needs batches >= 1 and dim >= 1".into());
        }
        if self.synthetic.spread.is_nan() || self.synthetic.spread < 0.0 {
            return bad(format!(
                "synthetic spread must be non-negative, got {}",
                self.synthetic.spread
            ));
        }
        self.hp
            .validate()
            .map_err(|e| HarnessError::Config {
                path: PathBuf::new(),
                message: e.to_string(),
            })
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::PartitionKind;
use super::synthetic::LambdaRule;
use super::HarnessError;
use crate::algorithms::Method;
use crate::compressors::CompressorKind;
use crate::objective::LossKind;
use crate::shuffling::SamplingPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Libsvm {
        path: PathBuf,
        clients: usize,
        #[serde(default)]
        partition: PartitionKind,
    },
    Synthetic {
        loss: LossKind,
        clients: usize,
        n: usize,
        dim: usize,
        #[serde(default = "one")]
        heterogeneity: f64,
        #[serde(default = "one")]
        spread: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_fraction() -> Option<f64> {
    Some(0.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Defaults to the method's own policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<SamplingPolicy>,
    #[serde(default = "default_fraction", skip_serializing_if = "Option::is_none")]
    pub batch_fraction: Option<f64>,
    /// Overrides `batch_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { policy: None, batch_fraction: default_fraction(), batch_size: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepsizePreset {
    Manual,
    #[default]
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: Method,
    #[serde(default)]
    pub stepsize_preset: StepsizePreset,
    /// Scales the learning rates of either preset.
    #[serde(default = "one")]
    pub multiplier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Target accuracy for the theory preset's accuracy-dependent clauses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn default_epochs() -> usize {
    100
}

fn default_seeds() -> u64 {
    1
}

/// A whole experiment, read from TOML with dotted keys such as
/// `method.name = "diana_rr"` or `compressor.k = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub lambda: LambdaRule,
    #[serde(default)]
    pub sampling: SamplingConfig,
    pub method: MethodConfig,
    pub compressor: CompressorKind,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative dataset paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataConfig::Libsvm { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let m = &self.method;
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if !(m.multiplier > 0.0 && m.multiplier.is_finite()) {
            return bad(format!("method.multiplier = {} must be positive", m.multiplier));
        }
        match m.stepsize_preset {
            StepsizePreset::Manual => {
                if m.gamma.is_none() {
                    return bad("manual stepsizes need method.gamma".into());
                }
                if m.epsilon.is_some() {
                    return bad("method.epsilon only applies to the theory preset".into());
                }
            }
            StepsizePreset::Theory => {
                if m.gamma.is_some() || m.eta.is_some() {
                    return bad("method.gamma / method.eta need method.stepsize_preset = \"manual\"".into());
                }
                if let Some(e) = m.epsilon {
                    if !(e > 0.0) {
                        return bad(format!("method.epsilon = {e} must be positive"));
                    }
                }
            }
        }
        if let Some(f) = self.sampling.batch_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("sampling.batch_fraction = {f} not in (0, 1]"));
            }
        }
        if self.sampling.batch_size == Some(0) {
            return bad("sampling.batch_size must be positive".into());
        }
        if let Some(p) = self.sampling.policy {
            if (p == SamplingPolicy::WithReplacement) != m.name.with_replacement() {
                return bad(format!("method {} cannot use sampling.policy {p:?}", m.name));
            }
        }
        match &self.data {
            DataConfig::Libsvm { clients, .. } | DataConfig::Synthetic { clients, .. } if *clients == 0 => {
                bad("data.clients must be at least 1".into())
            }
            _ => Ok(()),
        }
    }
}

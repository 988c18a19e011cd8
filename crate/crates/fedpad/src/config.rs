//! TOML experiment configuration and its content hash.

use crate::datagen::FamilyConfig;
use crate::error::{Error, Result};
use crate::model::{LossFlags, ModelConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Which training protocol a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Centralized training on one source domain.
    Single,
    /// Independent per-domain models, scores averaged at test time.
    Fused,
    /// Centralized training on the union of all source domains
    /// (a privacy-violating upper-bound baseline).
    All,
    /// Federated averaging of full monolithic models.
    FedPad,
    /// Federated averaging of the domain-invariant partition of a
    /// disentangled model.
    FedGpad,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Fused => "fused",
            Mode::All => "all",
            Mode::FedPad => "fedpad",
            Mode::FedGpad => "fedgpad",
        }
    }
}

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Generate a synthetic multi-domain family in memory.
    Synthetic {
        n_domains: usize,
        per_domain: usize,
        #[serde(default)]
        family: FamilyConfig,
    },
    /// Load previously generated datasets from directories, one per domain.
    Paths { domains: Vec<PathBuf> },
}

/// Optimizer selection for local training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64 },
}

fn default_rounds() -> u64 {
    20
}
fn default_local_epochs() -> usize {
    1
}
fn default_seed() -> u64 {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::Adam { lr: 0.002 }
}

/// A complete, reproducible description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub data: DataSource,
    /// Index into the domain pool of the held-out user domain. Defaults to
    /// the last pool entry (for synthetic data, the generated held-out
    /// domain). All other pool entries become data centers.
    #[serde(default)]
    pub user_domain: Option<usize>,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    /// Defaults depend on mode: 16 for classification-only training,
    /// 8 for disentangled training.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Ablation switches for the disentanglement loss terms.
    #[serde(default)]
    pub losses: LossFlags,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// For `single` mode: which training domain index to use.
    #[serde(default)]
    pub single_train_domain: usize,
    /// Run data centers on separate threads within each round.
    #[serde(default)]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        if let Some(0) = self.batch_size {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let lr = match self.optimizer {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr } => lr,
        };
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Config(format!("learning rate {lr} out of range")));
        }
        let pool = match &self.data {
            DataSource::Synthetic {
                n_domains,
                per_domain,
                ..
            } => {
                if *n_domains == 0 || *per_domain < 4 {
                    return Err(Error::Config(
                        "synthetic data needs at least one domain and four samples".into(),
                    ));
                }
                n_domains + 1
            }
            DataSource::Paths { domains } => {
                if domains.len() < 2 {
                    return Err(Error::Config(
                        "need at least two domain paths (one becomes the user domain)".into(),
                    ));
                }
                domains.len()
            }
        };
        let user = self.user_domain.unwrap_or(pool - 1);
        if user >= pool {
            return Err(Error::Config(format!(
                "user_domain {user} out of range for pool of {pool}"
            )));
        }
        if self.mode == Mode::Single && self.single_train_domain >= pool - 1 {
            return Err(Error::Config(format!(
                "single_train_domain {} out of range for {} training domains",
                self.single_train_domain,
                pool - 1
            )));
        }
        Ok(())
    }

    /// Size of the domain pool (training domains plus the user domain).
    pub fn pool_size(&self) -> usize {
        match &self.data {
            DataSource::Synthetic { n_domains, .. } => n_domains + 1,
            DataSource::Paths { domains } => domains.len(),
        }
    }

    /// Effective user-domain pool index.
    pub fn effective_user_domain(&self) -> usize {
        self.user_domain.unwrap_or(self.pool_size() - 1)
    }

    /// Effective batch size given the mode-dependent default.
    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.mode {
            Mode::FedGpad => 8,
            _ => 16,
        })
    }

    /// Hash of the canonical JSON serialization; identifies a run.
    pub fn content_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut hex = String::with_capacity(16);
        for b in &digest[..8] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

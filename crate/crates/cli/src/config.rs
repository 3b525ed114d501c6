//! Layered pipeline configuration: defaults, then the TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use progrl_core::service::ShapingMode;
use progrl_core::{GrpoConfig, RewardSpec, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsSection,
    pub reward: RewardSection,
    pub train: TrainSection,
    pub service: ServiceSection,
    pub harness: HarnessSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: PathsSection::default(),
            reward: RewardSection::default(),
            train: TrainSection::default(),
            service: ServiceSection::default(),
            harness: HarnessSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub log_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            data_dir: PathBuf::from("data"),
            checkpoint_dir: PathBuf::from("ckpt"),
            log_dir: PathBuf::from("logs"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub psi: f64,
    pub clip: f64,
    pub shaping: ShapingMode,
    pub gamma: f64,
    pub tau: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            psi: 0.01,
            clip: 100.0,
            shaping: ShapingMode::Absolute,
            gamma: 1.0,
            tau: 20.0,
        }
    }
}

impl RewardSection {
    pub fn spec(&self) -> RewardSpec {
        RewardSpec::with_tau(self.tau)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub sft_epochs: usize,
    pub sft_learning_rate: f64,
    pub grpo_iters: usize,
    pub group_size: usize,
    pub epsilon: f64,
    pub kl_beta: f64,
    pub temperature: f64,
    pub nucleus_p: f64,
    pub learning_rate: f64,
    pub corruption_rate: f64,
    pub eval_interval: usize,
    /// Cap on rendered training examples; the dataset is strided down to it.
    pub max_examples: usize,
    /// Context window length K.
    pub window: usize,
    /// Previous-progress dropout probability while rendering examples.
    pub prev_dropout: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let grpo = GrpoConfig::default();
        let train = TrainConfig::default();
        TrainSection {
            sft_epochs: train.sft_epochs,
            sft_learning_rate: train.sft_learning_rate,
            grpo_iters: train.grpo_iters,
            group_size: grpo.group_size,
            epsilon: grpo.epsilon,
            kl_beta: grpo.kl_beta,
            temperature: grpo.temperature,
            nucleus_p: grpo.nucleus_p,
            learning_rate: grpo.learning_rate,
            corruption_rate: train.corruption_rate,
            eval_interval: train.eval_interval,
            max_examples: 800,
            window: 2,
            prev_dropout: 0.3,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            grpo: GrpoConfig {
                group_size: self.group_size,
                epsilon: self.epsilon,
                kl_beta: self.kl_beta,
                temperature: self.temperature,
                nucleus_p: self.nucleus_p,
                learning_rate: self.learning_rate,
                seed,
            },
            sft_epochs: self.sft_epochs,
            sft_learning_rate: self.sft_learning_rate,
            grpo_iters: self.grpo_iters,
            corruption_rate: self.corruption_rate,
            eval_interval: self.eval_interval,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub backend: String,
    /// Blend weight of the transport channel in the oracle's distance.
    pub beta: f64,
    pub timeout_ms: u64,
    pub endpoint: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            bind: "127.0.0.1:7878".to_string(),
            backend: "oracle".to_string(),
            beta: 0.0,
            timeout_ms: 2000,
            endpoint: String::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub task: String,
    pub budget: usize,
    pub dim: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            task: "reach".to_string(),
            budget: 200,
            dim: 2,
        }
    }
}

/// Load the TOML config file, or defaults when no path is given.
pub fn load(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid config {}: {e}", p.display())))
        }
    }
}

//! Repository configuration, loaded from TOML and validated up front so a
//! bad value fails before any training or serving starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rdqmap_core::llm::{ChatClientConfig, ChatMode};
use rdqmap_core::scene::{Scenario, ScenarioConfig};
use rdqmap_core::trainer::TrainConfig;

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproximatorKind {
    #[default]
    Conv,
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ApproximatorKind,
    /// Seed for the initial network weights (independent of the training seed).
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub checkpoints: PathBuf,
    pub logs: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            checkpoints: PathBuf::from("checkpoints"),
            logs: PathBuf::from("logs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".to_string(),
            port: 8787,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepoConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub chat: ChatClientConfig,
    pub paths: PathsConfig,
    pub service: ServiceConfig,
}

impl Default for RepoConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default_for(Scenario::Grasp),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            chat: ChatClientConfig::default(),
            paths: PathsConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl RepoConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        Self::from_toml(&crate::read_text(path)?)
    }

    /// Everything the trainer, the scene generator and the chat client would
    /// reject later is rejected here.
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.scenario.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        if self.chat.mode == ChatMode::Remote && self.chat.endpoint.is_none() {
            return Err(ServiceError::Config("chat.mode = \"remote\" needs chat.endpoint".into()));
        }
        if self.chat.credential_env.is_empty() {
            return Err(ServiceError::Config("chat.credential_env must name a variable".into()));
        }
        if self.chat.timeout_secs == 0 {
            return Err(ServiceError::Config("chat.timeout_secs must be positive".into()));
        }
        if self.model.kind == ApproximatorKind::Tabular && self.train.learning_rate > 1.0 {
            return Err(ServiceError::Config("tabular learning_rate must be in (0, 1]".into()));
        }
        Ok(())
    }
}

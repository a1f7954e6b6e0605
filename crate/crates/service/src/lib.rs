//! Operational shell around `rdqmap-core`: TOML configuration, checkpoint
//! files, the `rdqmap` command line, a remote chat client, and the HTTP API
//! consumed by the inspector.

pub mod api;
pub mod commands;
pub mod config;
pub mod model;
pub mod remote;

use std::path::{Path, PathBuf};

use thiserror::Error;

use rdqmap_core::explain::ExplainError;
use rdqmap_core::llm::ChatError;
use rdqmap_core::qmap::QMapError;
use rdqmap_core::scene::SceneError;
use rdqmap_core::trainer::TrainError;

pub use config::RepoConfig;
pub use model::Model;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    QMap(#[from] QMapError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Chat(#[from] ChatError),
}

impl ServiceError {
    /// Stable short name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Io { .. } => "io",
            ServiceError::Config(_) => "config",
            ServiceError::Usage(_) => "usage",
            ServiceError::Scene(_) => "scene",
            ServiceError::QMap(_) => "qmap",
            ServiceError::Train(_) => "train",
            ServiceError::Explain(ExplainError::MissingPair(..)) => "missing_pair",
            ServiceError::Explain(_) => "explain",
            ServiceError::Chat(ChatError::MissingCredential(_)) => "credential",
            ServiceError::Chat(_) => "chat",
        }
    }

    /// One-line JSON error report: `{"error":{"kind":..,"message":..}}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({"error": {"kind": self.kind(), "message": self.to_string()}}).to_string()
    }
}

pub(crate) fn io_error(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Write a file, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<(), ServiceError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, EpisodeMetrics, TrainConfig, TrainMode};
use crate::qmap::{f64s_from_le_bytes, f64s_to_le_bytes, Approximator, ParamManifest, ParamSet, QMapError};
use crate::scene::ScenarioConfig;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk checkpoint: JSON manifest with each layer's values as base64
/// little-endian f64, so parameters round-trip bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub params: ParamManifest,
    /// One base64 string per manifest layer.
    pub payload: Vec<String>,
    pub train_config: TrainConfig,
    pub mode: TrainMode,
    pub step: u64,
    /// Scenario the approximator was trained on, when known.
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub metrics: Vec<EpisodeMetrics>,
}

impl CheckpointFile {
    pub fn from_checkpoint<A: Approximator>(ckpt: &Checkpoint<A>, scenario: Option<ScenarioConfig>) -> Self {
        let params = ckpt.approximator.export_params();
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            payload: params.payload.iter().map(|p| STANDARD.encode(f64s_to_le_bytes(p))).collect(),
            params: params.manifest,
            train_config: ckpt.config.clone(),
            mode: ckpt.mode,
            step: ckpt.step,
            scenario,
            metrics: ckpt.metrics.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, QMapError> {
        let file: Self = serde_json::from_str(text).map_err(|e| QMapError::Params(format!("checkpoint JSON: {e}")))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(QMapError::Params(format!(
                "checkpoint format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn params(&self) -> Result<ParamSet, QMapError> {
        let payload = self
            .payload
            .iter()
            .map(|s| {
                let bytes = STANDARD
                    .decode(s)
                    .map_err(|e| QMapError::Params(format!("payload base64: {e}")))?;
                f64s_from_le_bytes(&bytes)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ParamSet {
            manifest: self.params.clone(),
            payload,
        })
    }

    pub fn into_checkpoint<A: Approximator>(self) -> Result<Checkpoint<A>, QMapError> {
        let approximator = A::import_params(&self.params()?)?;
        Ok(Checkpoint {
            approximator,
            config: self.train_config,
            mode: self.mode,
            step: self.step,
            metrics: self.metrics,
        })
    }
}

/// Metrics as JSON lines, one episode record per line.
pub fn metrics_jsonl(metrics: &[EpisodeMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("metrics are serializable"));
        out.push('\n');
    }
    out
}

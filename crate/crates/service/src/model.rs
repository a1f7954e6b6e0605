//! The loaded decision model: a trained approximator from a checkpoint, or a
//! fixed Q-Map set (handy for worked examples and scripted demos).

use std::path::Path;

use rdqmap_core::qmap::{Approximator, ConvApproximator, QMapError, QMapSet, TabularApproximator};
use rdqmap_core::scene::{GridScene, ScenarioConfig};
use rdqmap_core::trainer::{CheckpointFile, Checkpoint};

use crate::{read_text, write_text, ServiceError};

#[derive(Debug, Clone)]
pub enum Model {
    Conv(ConvApproximator),
    Tabular(TabularApproximator),
    /// The same maps for every state; their size must match the scene.
    Fixed(QMapSet),
}

impl Model {
    pub fn from_checkpoint_file(file: &CheckpointFile) -> Result<Self, ServiceError> {
        let model = match file.params.kind.as_str() {
            "conv" => Model::Conv(file.clone().into_checkpoint::<ConvApproximator>()?.approximator),
            "tabular" => Model::Tabular(file.clone().into_checkpoint::<TabularApproximator>()?.approximator),
            other => return Err(QMapError::Params(format!("unknown approximator kind '{other}'")).into()),
        };
        Ok(model)
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, CheckpointFile), ServiceError> {
        let file = CheckpointFile::from_json(&read_text(path)?)?;
        Ok((Self::from_checkpoint_file(&file)?, file))
    }

    /// A `QMapSet` JSON file.
    pub fn load_qmaps(path: &Path) -> Result<Self, ServiceError> {
        let set: QMapSet = serde_json::from_str(&read_text(path)?)
            .map_err(|e| QMapError::Inconsistent(format!("Q-Map file: {e}")))?;
        set.validate()?;
        Ok(Model::Fixed(set))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Conv(_) => "conv",
            Model::Tabular(_) => "tabular",
            Model::Fixed(_) => "fixed",
        }
    }

    pub fn component_names(&self) -> &[String] {
        match self {
            Model::Conv(a) => &a.heads().names,
            Model::Tabular(a) => &a.heads().names,
            Model::Fixed(q) => &q.component_names,
        }
    }

    /// Reject scenarios whose observations or grid this model cannot read.
    pub fn check_scenario(&self, config: &ScenarioConfig) -> Result<(), ServiceError> {
        if let Model::Conv(a) = self {
            if a.channels() != config.channels() {
                return Err(QMapError::Inconsistent(format!(
                    "model reads {} observation channels, the {} scenario has {}",
                    a.channels(),
                    config.scenario().name(),
                    config.channels()
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Q-Maps for the scene's current state.
    pub fn qmaps(&self, scene: &GridScene) -> Result<QMapSet, ServiceError> {
        match self {
            Model::Conv(a) => {
                if a.channels() != scene.num_channels() {
                    return Err(QMapError::Inconsistent(format!(
                        "model reads {} channels, scene has {}",
                        a.channels(),
                        scene.num_channels()
                    ))
                    .into());
                }
                Ok(a.predict(&scene.observe()))
            }
            Model::Tabular(a) => Ok(a.predict(&scene.observe())),
            Model::Fixed(q) => {
                if q.width() != scene.width || q.height() != scene.height {
                    return Err(QMapError::Inconsistent(format!(
                        "fixed maps are {}x{}, scene is {}x{}",
                        q.width(),
                        q.height(),
                        scene.width,
                        scene.height
                    ))
                    .into());
                }
                Ok(q.clone())
            }
        }
    }
}

pub fn save_checkpoint<A: Approximator>(
    path: &Path,
    ckpt: &Checkpoint<A>,
    scenario: Option<ScenarioConfig>,
) -> Result<(), ServiceError> {
    write_text(path, &CheckpointFile::from_checkpoint(ckpt, scenario).to_json())
}

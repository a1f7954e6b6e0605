//! Approximator parameters as named little-endian f64 arrays plus a JSON
//! manifest.

use serde::{Deserialize, Serialize};

use super::QMapError;

pub const PARAM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerShape {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub format_version: u32,
    /// `"conv"` or `"tabular"`.
    pub kind: String,
    pub component_names: Vec<String>,
    pub weights: Vec<f64>,
    pub layers: Vec<LayerShape>,
    /// Approximator-specific settings (channels, learning rate, ...).
    pub settings: serde_json::Value,
}

/// Manifest plus one payload array per manifest layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub manifest: ParamManifest,
    pub payload: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn validate(&self, kind: &str) -> Result<(), QMapError> {
        let m = &self.manifest;
        if m.format_version != PARAM_FORMAT_VERSION {
            return Err(QMapError::Params(format!(
                "parameter format_version {} (expected {PARAM_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.kind != kind {
            return Err(QMapError::Params(format!("expected '{kind}' parameters, found '{}'", m.kind)));
        }
        if m.component_names.is_empty() || m.component_names.len() != m.weights.len() {
            return Err(QMapError::Params("component names and weights disagree".into()));
        }
        if m.layers.len() != self.payload.len() {
            return Err(QMapError::Params(format!(
                "{} layers in manifest, {} payload arrays",
                m.layers.len(),
                self.payload.len()
            )));
        }
        for (layer, data) in m.layers.iter().zip(&self.payload) {
            if layer.numel() != data.len() {
                return Err(QMapError::Params(format!(
                    "layer '{}' has shape {:?} but {} values",
                    layer.name,
                    layer.shape,
                    data.len()
                )));
            }
        }
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&[f64]> {
        self.manifest
            .layers
            .iter()
            .position(|l| l.name == name)
            .map(|i| self.payload[i].as_slice())
    }
}

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn f64s_from_le_bytes(bytes: &[u8]) -> Result<Vec<f64>, QMapError> {
    if bytes.len() % 8 != 0 {
        return Err(QMapError::Params(format!(
            "payload of {} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

//! Exact lookup-table approximator. Used as an oracle for the learning rules:
//! it has no approximation error, so tabular runs can be checked against
//! value iteration.

use std::collections::BTreeMap;

use serde_json::json;

use super::{Approximator, FitSample, Heads, LayerShape, ParamManifest, ParamSet, QMap, QMapError, QMapSet, PARAM_FORMAT_VERSION};
use crate::scene::{Observation, Pixel};

#[derive(Debug, Clone)]
struct Entry {
    width: usize,
    height: usize,
    /// `values[k * pixels + pixel_index]`
    values: Vec<f64>,
}

/// Table keyed by (observation digest, pixel, component), default 0.
#[derive(Debug, Clone)]
pub struct TabularApproximator {
    heads: Heads,
    learning_rate: f64,
    table: BTreeMap<[u8; 32], Entry>,
}

impl TabularApproximator {
    pub fn new(heads: Heads, learning_rate: f64) -> Self {
        Self {
            heads,
            learning_rate,
            table: BTreeMap::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// Number of distinct observations stored.
    pub fn num_states(&self) -> usize {
        self.table.len()
    }

    pub fn get(&self, obs: &Observation, pixel: Pixel, k: usize) -> f64 {
        self.table
            .get(&obs.digest())
            .map_or(0.0, |e| e.values[k * e.width * e.height + pixel.index(e.width)])
    }

    pub fn set(&mut self, obs: &Observation, pixel: Pixel, k: usize, value: f64) {
        let entry = self.entry_mut(obs);
        let n = entry.width * entry.height;
        entry.values[k * n + pixel.index(entry.width)] = value;
    }

    fn entry_mut(&mut self, obs: &Observation) -> &mut Entry {
        let k = self.heads.len();
        self.table.entry(obs.digest()).or_insert_with(|| Entry {
            width: obs.width,
            height: obs.height,
            values: vec![0.0; k * obs.num_pixels()],
        })
    }
}

impl Approximator for TabularApproximator {
    fn heads(&self) -> &Heads {
        &self.heads
    }

    fn predict(&self, obs: &Observation) -> QMapSet {
        let n = obs.num_pixels();
        let maps = (0..self.heads.len())
            .map(|k| match self.table.get(&obs.digest()) {
                Some(e) => QMap {
                    width: e.width,
                    height: e.height,
                    values: e.values[k * n..(k + 1) * n].to_vec(),
                },
                None => QMap::zeros(obs.width, obs.height),
            })
            .collect();
        QMapSet {
            maps,
            component_names: self.heads.names.clone(),
            weights: self.heads.weights.clone(),
        }
    }

    fn values_at(&self, obs: &Observation, pixel: Pixel) -> Vec<f64> {
        (0..self.heads.len()).map(|k| self.get(obs, pixel, k)).collect()
    }

    fn fit(&mut self, batch: &[FitSample<'_>]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let lr = self.learning_rate;
        let mut loss = 0.0;
        for sample in batch {
            let entry = self.entry_mut(sample.observation);
            let n = entry.width * entry.height;
            let i = sample.pixel.index(entry.width);
            for (k, &target) in sample.targets.iter().enumerate() {
                let q = &mut entry.values[k * n + i];
                let err = *q - target;
                loss += err * err;
                *q += lr * (target - *q);
            }
        }
        loss / batch.len() as f64
    }

    fn configure_optimizer(&mut self, learning_rate: f64, _momentum: f64) {
        self.learning_rate = learning_rate;
    }

    fn copy_from(&mut self, other: &Self) {
        self.table.clone_from(&other.table);
    }

    fn export_params(&self) -> ParamSet {
        let k = self.heads.len();
        let mut layers = Vec::with_capacity(self.table.len());
        let mut payload = Vec::with_capacity(self.table.len());
        for (digest, e) in &self.table {
            layers.push(LayerShape {
                name: hex::encode(digest),
                shape: vec![k, e.height, e.width],
            });
            payload.push(e.values.clone());
        }
        ParamSet {
            manifest: ParamManifest {
                format_version: PARAM_FORMAT_VERSION,
                kind: "tabular".into(),
                component_names: self.heads.names.clone(),
                weights: self.heads.weights.clone(),
                layers,
                settings: json!({ "learning_rate": self.learning_rate }),
            },
            payload,
        }
    }

    fn import_params(params: &ParamSet) -> Result<Self, QMapError> {
        params.validate("tabular")?;
        let m = &params.manifest;
        let heads = Heads::new(m.component_names.clone(), m.weights.clone());
        let lr = m.settings["learning_rate"]
            .as_f64()
            .ok_or_else(|| QMapError::Params("missing learning_rate".into()))?;
        let mut table = BTreeMap::new();
        for (layer, data) in m.layers.iter().zip(&params.payload) {
            let digest: [u8; 32] = hex::decode(&layer.name)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| QMapError::Params(format!("bad digest '{}'", layer.name)))?;
            let [k, height, width] = layer.shape[..] else {
                return Err(QMapError::Params("tabular layers need shape [K, H, W]".into()));
            };
            if k != heads.len() {
                return Err(QMapError::Params("component count mismatch".into()));
            }
            table.insert(
                digest,
                Entry {
                    width,
                    height,
                    values: data.clone(),
                },
            );
        }
        Ok(Self {
            heads,
            learning_rate: lr,
            table,
        })
    }
}

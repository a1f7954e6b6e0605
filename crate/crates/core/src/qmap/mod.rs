//! Pixel-wise Q-Maps, one per reward component, and action selection over
//! their weighted sum.

mod approx;
mod conv;
mod params;
mod tabular;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Action, Pixel, Primitive};

pub use approx::{Approximator, FitSample, Heads};
pub use conv::{ConvApproximator, ConvNet, ConvSettings, HIDDEN_WIDTH};
pub use params::{f64s_from_le_bytes, f64s_to_le_bytes, LayerShape, ParamManifest, ParamSet, PARAM_FORMAT_VERSION};
pub use tabular::TabularApproximator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QMapError {
    #[error("selection mask is empty")]
    EmptyMask,
    #[error("pixel ({u}, {v}) outside {width}x{height} map")]
    OutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },
    #[error("component index {index} out of range for {count} components")]
    BadComponent { index: usize, count: usize },
    #[error("inconsistent Q-Map set: {0}")]
    Inconsistent(String),
    #[error("parameter error: {0}")]
    Params(String),
}

/// Row-major grid of Q-values for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl QMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, QMapError> {
        if values.len() != width * height {
            return Err(QMapError::Inconsistent(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn get(&self, p: Pixel) -> f64 {
        self.values[p.index(self.width)]
    }

    pub fn set(&mut self, p: Pixel, value: f64) {
        let w = self.width;
        self.values[p.index(w)] = value;
    }

    fn check(&self, p: Pixel) -> Result<(), QMapError> {
        if p.u < self.width && p.v < self.height {
            Ok(())
        } else {
            Err(QMapError::OutOfBounds {
                u: p.u,
                v: p.v,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Grid as `[row][column]` for JSON payloads.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.width).map(<[f64]>::to_vec).collect()
    }
}

/// K aligned Q-Maps with component names and preference weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMapSet {
    pub maps: Vec<QMap>,
    pub component_names: Vec<String>,
    pub weights: Vec<f64>,
}

impl QMapSet {
    pub fn new(maps: Vec<QMap>, component_names: Vec<String>, weights: Vec<f64>) -> Result<Self, QMapError> {
        let set = Self {
            maps,
            component_names,
            weights,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), QMapError> {
        let k = self.maps.len();
        if k == 0 {
            return Err(QMapError::Inconsistent("no maps".into()));
        }
        if self.component_names.len() != k || self.weights.len() != k {
            return Err(QMapError::Inconsistent(format!(
                "{k} maps, {} names, {} weights",
                self.component_names.len(),
                self.weights.len()
            )));
        }
        let (w, h) = (self.maps[0].width, self.maps[0].height);
        for m in &self.maps {
            if m.width != w || m.height != h || m.values.len() != w * h {
                return Err(QMapError::Inconsistent("maps differ in dimensions".into()));
            }
            if m.values.iter().any(|x| !x.is_finite()) {
                return Err(QMapError::Inconsistent("non-finite Q-value".into()));
            }
        }
        if self.weights.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(QMapError::Inconsistent("weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.maps[0].width
    }

    pub fn height(&self) -> usize {
        self.maps[0].height
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, QMapError> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }
}

/// Weighted elementwise sum of all component maps.
pub fn composite(q: &QMapSet) -> QMap {
    let mut out = QMap::zeros(q.width(), q.height());
    for (map, &w) in q.maps.iter().zip(&q.weights) {
        for (o, &x) in out.values.iter_mut().zip(&map.values) {
            *o += w * x;
        }
    }
    out
}

/// Index of the largest value; ties go to the lowest index.
fn argmax_over(map: &QMap, mask: Option<&[Pixel]>) -> Result<Pixel, QMapError> {
    match mask {
        None => {
            let mut best = 0;
            for (i, &x) in map.values.iter().enumerate() {
                if x > map.values[best] {
                    best = i;
                }
            }
            Ok(Pixel::from_index(best, map.width))
        }
        Some(pixels) => {
            let mut best: Option<(f64, usize)> = None;
            for &p in pixels {
                map.check(p)?;
                let (x, i) = (map.get(p), p.index(map.width));
                best = match best {
                    Some((bx, bi)) if bx > x || (bx == x && bi < i) => Some((bx, bi)),
                    _ => Some((x, i)),
                };
            }
            best.map(|(_, i)| Pixel::from_index(i, map.width))
                .ok_or(QMapError::EmptyMask)
        }
    }
}

/// The global action: argmax of the composite map.
pub fn select_global(q: &QMapSet, mask: Option<&[Pixel]>, primitive: Primitive) -> Result<Action, QMapError> {
    let pixel = argmax_over(&composite(q), mask)?;
    Ok(Action { primitive, pixel })
}

/// Argmax of a single component map.
pub fn select_component(
    q: &QMapSet,
    k: usize,
    mask: Option<&[Pixel]>,
    primitive: Primitive,
) -> Result<Action, QMapError> {
    let map = q.maps.get(k).ok_or(QMapError::BadComponent {
        index: k,
        count: q.len(),
    })?;
    let pixel = argmax_over(map, mask)?;
    Ok(Action { primitive, pixel })
}

/// Raw (unweighted) component values at the action's pixel.
pub fn q_at(q: &QMapSet, a: &Action) -> Result<Vec<f64>, QMapError> {
    q.maps[0].check(a.pixel)?;
    Ok(q.maps.iter().map(|m| m.get(a.pixel)).collect())
}

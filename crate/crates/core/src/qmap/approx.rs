use serde::{Deserialize, Serialize};

use super::{ParamSet, QMapError, QMapSet};
use crate::scene::{Observation, Pixel};

/// Component names and preference weights shared by every map an
/// approximator produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heads {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

impl Heads {
    pub fn new(names: Vec<String>, weights: Vec<f64>) -> Self {
        assert_eq!(names.len(), weights.len(), "one weight per component");
        Self { names, weights }
    }

    /// A single summed head, as used by the monolithic baseline.
    pub fn total() -> Self {
        Self::new(vec!["total".to_string()], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One regression example: push the component values at `pixel` toward
/// `targets`.
#[derive(Debug, Clone, Copy)]
pub struct FitSample<'a> {
    pub observation: &'a Observation,
    pub pixel: Pixel,
    pub targets: &'a [f64],
}

/// A function approximator producing one Q-Map per component.
pub trait Approximator: Clone + Send + Sync {
    fn heads(&self) -> &Heads;

    fn num_components(&self) -> usize {
        self.heads().len()
    }

    fn predict(&self, obs: &Observation) -> QMapSet;

    /// Component values at a single pixel. Implementations may compute this
    /// without producing the full maps.
    fn values_at(&self, obs: &Observation, pixel: Pixel) -> Vec<f64> {
        self.predict(obs).maps.iter().map(|m| m.get(pixel)).collect()
    }

    /// One optimisation step on the batch; returns the mean over samples of
    /// the summed squared component errors, measured before the update.
    fn fit(&mut self, batch: &[FitSample<'_>]) -> f64;

    /// Set optimiser hyperparameters. Approximators without momentum ignore
    /// the second argument.
    fn configure_optimizer(&mut self, learning_rate: f64, momentum: f64);

    /// Overwrite this approximator's parameters with `other`'s.
    fn copy_from(&mut self, other: &Self);

    fn export_params(&self) -> ParamSet;

    fn import_params(params: &ParamSet) -> Result<Self, QMapError>
    where
        Self: Sized;
}

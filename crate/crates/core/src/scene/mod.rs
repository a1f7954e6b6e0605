//! Grid-world scenes for the grasping and landing tasks.
//!
//! A [`GridScene`] is a grid of surface cells plus (for grasping) a set of
//! placed objects. Rewards are decomposed into one component per task
//! property; see [`sub_rewards`].

mod generate;
mod io;
mod reward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_grasp_scene, generate_land_scene, GraspConfig, LandConfig, ScenarioConfig};
pub use io::{SceneFile, SCENE_FORMAT_VERSION};
pub use reward::{flatness_angle, is_flat, step, sub_rewards, FLAT_THRESHOLD_DEG};

/// Default rainbow palette, lowest rank first.
pub const DEFAULT_PALETTE: [&str; 6] = ["red", "orange", "yellow", "green", "blue", "purple"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("could not place {requested} objects on a {width}x{height} grid after {attempts} attempts")]
    PlacementFailed {
        requested: usize,
        width: usize,
        height: usize,
        attempts: usize,
    },
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("pixel ({u}, {v}) outside {width}x{height} grid")]
    OutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("action primitive {primitive:?} does not match scenario {scenario:?}")]
    WrongPrimitive {
        primitive: Primitive,
        scenario: Scenario,
    },
    #[error("normal vector has length {0}, expected a unit vector")]
    NotUnit(f64),
    #[error("malformed scene: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Binary,
    Continuous,
}

/// One reward component and its preference weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub kind: RewardKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl PropertySpec {
    pub fn new(name: &str, kind: RewardKind, weight: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            weight,
        }
    }
}

pub(crate) fn validate_properties(props: &[PropertySpec]) -> Result<(), SceneError> {
    for (i, p) in props.iter().enumerate() {
        if !(p.weight >= 0.0 && p.weight.is_finite()) {
            return Err(SceneError::InvalidConfig(format!(
                "weight of '{}' must be a non-negative finite number",
                p.name
            )));
        }
        if props[..i].iter().any(|q| q.name == p.name) {
            return Err(SceneError::InvalidConfig(format!(
                "duplicate property name '{}'",
                p.name
            )));
        }
    }
    Ok(())
}

/// Surface or object colour. `rank` is `None` for grey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorId {
    pub rank: Option<u8>,
}

impl ColorId {
    pub const GREY: ColorId = ColorId { rank: None };

    pub fn ranked(rank: u8) -> Self {
        Self { rank: Some(rank) }
    }

    pub fn is_grey(&self) -> bool {
        self.rank.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cube,
    Bowl,
}

impl Shape {
    /// Rendered height above the table surface.
    pub fn height(self) -> f64 {
        match self {
            Shape::Cube => 1.0,
            Shape::Bowl => 0.6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Bowl => "bowl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub u: usize,
    pub v: usize,
}

impl Pixel {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }

    /// Row-major index on a grid of the given width.
    pub fn index(&self, width: usize) -> usize {
        self.v * width + self.u
    }

    pub fn from_index(index: usize, width: usize) -> Self {
        Self {
            u: index % width,
            v: index / width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub shape: Shape,
    pub color: ColorId,
    pub footprint: Vec<Pixel>,
    #[serde(default)]
    pub removed: bool,
}

impl SceneObject {
    pub fn covers(&self, p: Pixel) -> bool {
        self.footprint.contains(&p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub height: f64,
    pub normal: [f64; 3],
    pub color: ColorId,
}

impl SurfaceCell {
    pub fn flat_grey(height: f64) -> Self {
        Self {
            height,
            normal: [0.0, 0.0, 1.0],
            color: ColorId::GREY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Grasp,
    Land,
}

impl Scenario {
    pub fn primitive(self) -> Primitive {
        match self {
            Scenario::Grasp => Primitive::PickUp,
            Scenario::Land => Primitive::Land,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Grasp => "grasp",
            Scenario::Land => "land",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grasp" => Ok(Scenario::Grasp),
            "land" => Ok(Scenario::Land),
            other => Err(SceneError::InvalidConfig(format!(
                "unknown scenario '{other}' (expected grasp or land)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    PickUp,
    Land,
}

/// A motion primitive executed at a grid pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub primitive: Primitive,
    pub pixel: Pixel,
}

impl Action {
    pub fn new(primitive: Primitive, u: usize, v: usize) -> Self {
        Self {
            primitive,
            pixel: Pixel::new(u, v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub names: Vec<String>,
    pub components: Vec<f64>,
}

impl RewardVector {
    pub fn zeros(names: &[String]) -> Self {
        Self {
            names: names.to_vec(),
            components: vec![0.0; names.len()],
        }
    }

    pub fn total(&self) -> f64 {
        self.components.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.components[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepInfo {
    Grasped { object_id: u32 },
    GraspFailed { object_id: u32 },
    EmptyPick,
    Landed { flat: bool, colored: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: RewardVector,
    pub next_observation: Observation,
    pub done: bool,
    pub info: StepInfo,
}

/// The world state: surface cells, placed objects, and episode bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScene {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<SurfaceCell>,
    pub objects: Vec<SceneObject>,
    pub scenario: Scenario,
    pub palette: Vec<String>,
    pub properties: Vec<PropertySpec>,
    pub steps_elapsed: usize,
    pub step_limit: usize,
    pub done: bool,
}

impl GridScene {
    /// A flat grey scene without objects.
    pub fn empty(scenario: Scenario, width: usize, height: usize) -> Self {
        let properties = match scenario {
            Scenario::Grasp => GraspConfig::default().properties,
            Scenario::Land => LandConfig::default().properties,
        };
        Self {
            width,
            height,
            cells: vec![SurfaceCell::flat_grey(0.0); width * height],
            objects: Vec::new(),
            scenario,
            palette: DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect(),
            properties,
            steps_elapsed: 0,
            step_limit: match scenario {
                Scenario::Grasp => 50,
                Scenario::Land => 1,
            },
            done: false,
        }
    }

    pub fn palette_size(&self) -> usize {
        self.palette.len()
    }

    pub fn component_names(&self) -> Vec<String> {
        self.properties.iter().map(|p| p.name.clone()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.properties.iter().map(|p| p.weight).collect()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.u < self.width && p.v < self.height
    }

    pub fn check_bounds(&self, p: Pixel) -> Result<(), SceneError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(SceneError::OutOfBounds {
                u: p.u,
                v: p.v,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn cell(&self, p: Pixel) -> &SurfaceCell {
        &self.cells[p.index(self.width)]
    }

    pub fn cell_mut(&mut self, p: Pixel) -> &mut SurfaceCell {
        let w = self.width;
        &mut self.cells[p.index(w)]
    }

    /// The live object covering `p`, if any.
    pub fn object_at(&self, p: Pixel) -> Option<&SceneObject> {
        self.objects.iter().find(|o| !o.removed && o.covers(p))
    }

    pub fn live_cubes(&self) -> usize {
        self.objects
            .iter()
            .filter(|o| !o.removed && o.shape == Shape::Cube)
            .count()
    }

    pub fn color_name(&self, color: ColorId) -> &str {
        match color.rank {
            Some(r) => self
                .palette
                .get(r as usize)
                .map(String::as_str)
                .unwrap_or("unknown"),
            None => "grey",
        }
    }

    /// Human-readable description of what sits at `p`.
    pub fn label_at(&self, p: Pixel) -> String {
        match self.scenario {
            Scenario::Grasp => match self.object_at(p) {
                Some(o) => format!("{} {}", self.color_name(o.color), o.shape.name()),
                None => "empty cell".to_string(),
            },
            Scenario::Land => {
                let cell = self.cell(p);
                let flat = is_flat(cell.normal).unwrap_or(false);
                format!(
                    "{} {} surface",
                    self.color_name(cell.color),
                    if flat { "flat" } else { "inclined" }
                )
            }
        }
    }

    /// Number of feature channels in this scene's observations.
    pub fn num_channels(&self) -> usize {
        observation_channels(self.scenario, self.palette_size())
    }

    /// Stable content digest (hex SHA-256 of the canonical scene file).
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = SceneFile::from_scene(self).to_json();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Feature grid for the current state.
    pub fn observe(&self) -> Observation {
        let c = self.palette_size();
        let channels = self.num_channels();
        let mut obs = Observation::zeros(self.width, self.height, channels);
        for v in 0..self.height {
            for u in 0..self.width {
                let p = Pixel::new(u, v);
                let cell = self.cell(p);
                let (height, color, cube) = match self.object_at(p) {
                    Some(o) => (cell.height + o.shape.height(), o.color, o.shape == Shape::Cube),
                    None => (cell.height, cell.color, false),
                };
                obs.set(u, v, 0, height);
                match color.rank {
                    None => obs.set(u, v, 1, 1.0),
                    Some(r) if (r as usize) < c => obs.set(u, v, 2 + r as usize, 1.0),
                    Some(_) => {}
                }
                if self.scenario == Scenario::Grasp && cube {
                    obs.set(u, v, 2 + c, 1.0);
                }
            }
        }
        obs
    }
}

pub fn observation_channels(scenario: Scenario, palette_size: usize) -> usize {
    match scenario {
        Scenario::Grasp => 3 + palette_size,
        Scenario::Land => 2 + palette_size,
    }
}

/// Channel-major feature grid: `data[(c * height + v) * width + u]`.
///
/// Channel 0 is height, 1 the grey flag, `2..2+C` one-hot colour rank, and
/// for grasping `2+C` is the cube flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(c * self.height + v) * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: usize, value: f64) {
        self.data[(c * self.height + v) * self.width + u] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// SHA-256 over the little-endian bytes of the shape and the data.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for d in [self.width, self.height, self.channels] {
            h.update((d as u64).to_le_bytes());
        }
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        h.finalize().into()
    }
}

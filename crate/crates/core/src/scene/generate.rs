//! Seeded scene generators.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    validate_properties, ColorId, GridScene, Pixel, PropertySpec, RewardKind, Scenario,
    SceneError, SceneObject, Shape, SurfaceCell, DEFAULT_PALETTE, FLAT_THRESHOLD_DEG,
};

const MIN_SIDE: usize = 12;

fn default_palette() -> Vec<String> {
    DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspConfig {
    pub width: usize,
    pub height: usize,
    pub num_objects: usize,
    pub palette: Vec<String>,
    pub properties: Vec<PropertySpec>,
    pub cube_probability: f64,
    pub step_limit: usize,
    /// Placement attempts per object before the layout is abandoned.
    pub max_attempts: usize,
    /// Layout retries (placement failure or zero cubes) before giving up.
    pub max_regenerations: usize,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            width: 16,
            height: 16,
            num_objects: 7,
            palette: default_palette(),
            properties: vec![
                PropertySpec::new("color", RewardKind::Continuous, 1.0),
                PropertySpec::new("shape", RewardKind::Binary, 1.0),
            ],
            cube_probability: 0.5,
            step_limit: 50,
            max_attempts: 200,
            max_regenerations: 50,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        check_grid(self.width, self.height)?;
        check_palette(&self.palette)?;
        validate_properties(&self.properties)?;
        check_names(&self.properties, &["color", "shape"])?;
        if self.num_objects == 0 {
            return Err(SceneError::InvalidConfig("num_objects must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.cube_probability) || self.cube_probability == 0.0 {
            return Err(SceneError::InvalidConfig(
                "cube_probability must be in (0, 1]".into(),
            ));
        }
        if self.step_limit == 0 || self.max_attempts == 0 || self.max_regenerations == 0 {
            return Err(SceneError::InvalidConfig(
                "step_limit, max_attempts and max_regenerations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandConfig {
    pub width: usize,
    pub height: usize,
    pub num_blocks: usize,
    pub palette: Vec<String>,
    pub properties: Vec<PropertySpec>,
    /// Probability that a block (other than the first) is grey.
    pub grey_fraction: f64,
    /// Probability that a block (other than the first) has an inclined side.
    pub ramp_probability: f64,
    /// Fixed incline in degrees; drawn from `[15, 60]` per ramp when absent.
    pub incline_angle_deg: Option<f64>,
    pub max_attempts: usize,
    pub max_regenerations: usize,
}

impl Default for LandConfig {
    fn default() -> Self {
        Self {
            width: 16,
            height: 16,
            num_blocks: 5,
            palette: default_palette(),
            properties: vec![
                PropertySpec::new("flat", RewardKind::Binary, 1.0),
                PropertySpec::new("colored", RewardKind::Binary, 1.0),
            ],
            grey_fraction: 0.3,
            ramp_probability: 0.6,
            incline_angle_deg: None,
            max_attempts: 200,
            max_regenerations: 50,
        }
    }
}

impl LandConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        check_grid(self.width, self.height)?;
        check_palette(&self.palette)?;
        validate_properties(&self.properties)?;
        check_names(&self.properties, &["flat", "colored"])?;
        if self.num_blocks == 0 {
            return Err(SceneError::InvalidConfig("num_blocks must be positive".into()));
        }
        for (name, p) in [
            ("grey_fraction", self.grey_fraction),
            ("ramp_probability", self.ramp_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SceneError::InvalidConfig(format!("{name} must be in [0, 1]")));
            }
        }
        if let Some(a) = self.incline_angle_deg {
            if !(a > FLAT_THRESHOLD_DEG && a <= 80.0) {
                return Err(SceneError::InvalidConfig(format!(
                    "incline_angle_deg must be in ({FLAT_THRESHOLD_DEG}, 80]"
                )));
            }
        }
        if self.max_attempts == 0 || self.max_regenerations == 0 {
            return Err(SceneError::InvalidConfig(
                "max_attempts and max_regenerations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Either scenario's generator settings, tagged by scenario name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Grasp(GraspConfig),
    Land(LandConfig),
}

impl ScenarioConfig {
    pub fn default_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Grasp => ScenarioConfig::Grasp(GraspConfig::default()),
            Scenario::Land => ScenarioConfig::Land(LandConfig::default()),
        }
    }

    pub fn scenario(&self) -> Scenario {
        match self {
            ScenarioConfig::Grasp(_) => Scenario::Grasp,
            ScenarioConfig::Land(_) => Scenario::Land,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        match self {
            ScenarioConfig::Grasp(c) => c.validate(),
            ScenarioConfig::Land(c) => c.validate(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<GridScene, SceneError> {
        match self {
            ScenarioConfig::Grasp(c) => generate_grasp_scene(seed, c),
            ScenarioConfig::Land(c) => generate_land_scene(seed, c),
        }
    }

    pub fn properties(&self) -> &[PropertySpec] {
        match self {
            ScenarioConfig::Grasp(c) => &c.properties,
            ScenarioConfig::Land(c) => &c.properties,
        }
    }

    pub fn component_names(&self) -> Vec<String> {
        self.properties().iter().map(|p| p.name.clone()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.properties().iter().map(|p| p.weight).collect()
    }

    pub fn channels(&self) -> usize {
        match self {
            ScenarioConfig::Grasp(c) => super::observation_channels(Scenario::Grasp, c.palette.len()),
            ScenarioConfig::Land(c) => super::observation_channels(Scenario::Land, c.palette.len()),
        }
    }
}

fn check_grid(width: usize, height: usize) -> Result<(), SceneError> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(SceneError::InvalidConfig(format!(
            "grid must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
        )));
    }
    Ok(())
}

fn check_palette(palette: &[String]) -> Result<(), SceneError> {
    if palette.len() < 2 || palette.len() > u8::MAX as usize {
        return Err(SceneError::InvalidConfig(
            "palette needs between 2 and 255 colours".into(),
        ));
    }
    Ok(())
}

fn check_names(props: &[PropertySpec], allowed: &[&str]) -> Result<(), SceneError> {
    if props.is_empty() {
        return Err(SceneError::InvalidConfig("at least one property required".into()));
    }
    for p in props {
        if !allowed.contains(&p.name.as_str()) {
            return Err(SceneError::InvalidConfig(format!(
                "unknown property '{}' (expected one of {allowed:?})",
                p.name
            )));
        }
    }
    Ok(())
}

/// Random tabletop of cubes and bowls with disjoint footprints.
pub fn generate_grasp_scene(seed: u64, cfg: &GraspConfig) -> Result<GridScene, SceneError> {
    cfg.validate()?;
    let cells = cfg.width * cfg.height;
    if cfg.num_objects > cells {
        return Err(SceneError::PlacementFailed {
            requested: cfg.num_objects,
            width: cfg.width,
            height: cfg.height,
            attempts: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    for _ in 0..cfg.max_regenerations {
        let mut occupied = vec![false; cells];
        let mut objects = Vec::with_capacity(cfg.num_objects);
        for id in 0..cfg.num_objects {
            let mut placed = None;
            for _ in 0..cfg.max_attempts {
                attempts += 1;
                let (fw, fh) = (rng.gen_range(1..=2usize), rng.gen_range(1..=2usize));
                let u0 = rng.gen_range(0..=cfg.width - fw);
                let v0 = rng.gen_range(0..=cfg.height - fh);
                let footprint: Vec<Pixel> = (v0..v0 + fh)
                    .flat_map(|v| (u0..u0 + fw).map(move |u| Pixel::new(u, v)))
                    .collect();
                if footprint.iter().all(|p| !occupied[p.index(cfg.width)]) {
                    placed = Some(footprint);
                    break;
                }
            }
            let Some(footprint) = placed else { break };
            for p in &footprint {
                occupied[p.index(cfg.width)] = true;
            }
            let shape = if rng.gen_bool(cfg.cube_probability) {
                Shape::Cube
            } else {
                Shape::Bowl
            };
            let rank = rng.gen_range(0..cfg.palette.len()) as u8;
            objects.push(SceneObject {
                id: id as u32,
                shape,
                color: ColorId::ranked(rank),
                footprint,
                removed: false,
            });
        }
        if objects.len() < cfg.num_objects {
            continue;
        }
        // Layouts without a pickable target are filtered out.
        if !objects.iter().any(|o| o.shape == Shape::Cube) {
            continue;
        }
        return Ok(GridScene {
            width: cfg.width,
            height: cfg.height,
            cells: vec![SurfaceCell::flat_grey(0.0); cells],
            objects,
            scenario: Scenario::Grasp,
            palette: cfg.palette.clone(),
            properties: cfg.properties.clone(),
            steps_elapsed: 0,
            step_limit: cfg.step_limit,
            done: false,
        });
    }
    Err(SceneError::PlacementFailed {
        requested: cfg.num_objects,
        width: cfg.width,
        height: cfg.height,
        attempts,
    })
}

struct Block {
    u0: usize,
    v0: usize,
    w: usize,
    h: usize,
    ramp: Option<(Side, usize)>,
}

#[derive(Clone, Copy)]
enum Side {
    West,
    East,
    North,
    South,
}

impl Side {
    const ALL: [Side; 4] = [Side::West, Side::East, Side::North, Side::South];

    /// Outward (downhill) direction in grid coordinates.
    fn dir(self) -> (i64, i64) {
        match self {
            Side::West => (-1, 0),
            Side::East => (1, 0),
            Side::North => (0, -1),
            Side::South => (0, 1),
        }
    }
}

impl Block {
    /// Ramp cells with their distance from the top edge.
    fn ramp_cells(&self) -> Vec<(i64, i64, usize)> {
        let Some((side, len)) = self.ramp else {
            return Vec::new();
        };
        let (u0, v0) = (self.u0 as i64, self.v0 as i64);
        let (w, h) = (self.w as i64, self.h as i64);
        let mut out = Vec::new();
        for d in 1..=len as i64 {
            match side {
                Side::West => (v0..v0 + h).for_each(|v| out.push((u0 - d, v, d as usize))),
                Side::East => (v0..v0 + h).for_each(|v| out.push((u0 + w - 1 + d, v, d as usize))),
                Side::North => (u0..u0 + w).for_each(|u| out.push((u, v0 - d, d as usize))),
                Side::South => (u0..u0 + w).for_each(|u| out.push((u, v0 + h - 1 + d, d as usize))),
            }
        }
        out
    }

    fn cells(&self) -> Vec<(i64, i64)> {
        let mut out: Vec<(i64, i64)> = (self.v0..self.v0 + self.h)
            .flat_map(|v| (self.u0..self.u0 + self.w).map(move |u| (u as i64, v as i64)))
            .collect();
        out.extend(self.ramp_cells().into_iter().map(|(u, v, _)| (u, v)));
        out
    }
}

/// Blocks with flat tops and optional inclined sides on a grey ground.
pub fn generate_land_scene(seed: u64, cfg: &LandConfig) -> Result<GridScene, SceneError> {
    cfg.validate()?;
    let (width, height) = (cfg.width, cfg.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    for _ in 0..cfg.max_regenerations {
        let mut cells = vec![SurfaceCell::flat_grey(0.0); width * height];
        // Occupancy including a one-cell margin around each structure.
        let mut blocked = vec![false; width * height];
        let mut placed_blocks = 0;
        for b in 0..cfg.num_blocks {
            let first = b == 0;
            let want_ramp = first || rng.gen_bool(cfg.ramp_probability);
            let grey = !first && rng.gen_bool(cfg.grey_fraction);
            let color = if grey {
                ColorId::GREY
            } else {
                ColorId::ranked(rng.gen_range(0..cfg.palette.len()) as u8)
            };
            let angle = cfg
                .incline_angle_deg
                .unwrap_or_else(|| rng.gen_range(15.0..=60.0));
            let top: f64 = rng.gen_range(1.0..3.0);

            let mut found = None;
            for _ in 0..cfg.max_attempts {
                attempts += 1;
                let (w, h) = (rng.gen_range(2..=4usize), rng.gen_range(2..=4usize));
                let u0 = rng.gen_range(0..=width - w);
                let v0 = rng.gen_range(0..=height - h);
                let ramp = want_ramp.then(|| {
                    let side = Side::ALL[rng.gen_range(0..4)];
                    (side, rng.gen_range(1..=2usize))
                });
                let block = Block { u0, v0, w, h, ramp };
                let fits = block.cells().iter().all(|&(u, v)| {
                    u >= 0
                        && v >= 0
                        && (u as usize) < width
                        && (v as usize) < height
                        && !blocked[v as usize * width + u as usize]
                });
                if fits {
                    found = Some(block);
                    break;
                }
            }
            let Some(block) = found else {
                if first {
                    break;
                }
                continue;
            };
            placed_blocks += 1;

            let slope = angle.to_radians().tan();
            let len = block.ramp.map_or(0, |(_, l)| l) as f64;
            let top = top.max(len * slope + 0.5);
            for v in block.v0..block.v0 + block.h {
                for u in block.u0..block.u0 + block.w {
                    cells[v * width + u] = SurfaceCell {
                        height: top,
                        normal: [0.0, 0.0, 1.0],
                        color,
                    };
                }
            }
            if let Some((side, _)) = block.ramp {
                let (dx, dy) = side.dir();
                let (s, c) = angle.to_radians().sin_cos();
                let normal = [dx as f64 * s, dy as f64 * s, c];
                for (u, v, d) in block.ramp_cells() {
                    cells[v as usize * width + u as usize] = SurfaceCell {
                        height: top - d as f64 * slope,
                        normal,
                        color,
                    };
                }
            }
            for (u, v) in block.cells() {
                for nv in (v - 1).max(0)..=(v + 1).min(height as i64 - 1) {
                    for nu in (u - 1).max(0)..=(u + 1).min(width as i64 - 1) {
                        blocked[nv as usize * width + nu as usize] = true;
                    }
                }
            }
        }
        if placed_blocks == 0 {
            continue;
        }
        let scene = GridScene {
            width,
            height,
            cells,
            objects: Vec::new(),
            scenario: Scenario::Land,
            palette: cfg.palette.clone(),
            properties: cfg.properties.clone(),
            steps_elapsed: 0,
            step_limit: 1,
            done: false,
        };
        if land_scene_is_complete(&scene) {
            return Ok(scene);
        }
    }
    Err(SceneError::PlacementFailed {
        requested: cfg.num_blocks,
        width,
        height,
        attempts,
    })
}

fn land_scene_is_complete(scene: &GridScene) -> bool {
    let flat = |c: &SurfaceCell| super::is_flat(c.normal).unwrap_or(false);
    scene.cells.iter().any(|c| flat(c) && !c.color.is_grey())
        && scene.cells.iter().any(|c| flat(c) && c.color.is_grey())
        && scene.cells.iter().any(|c| !flat(c))
}

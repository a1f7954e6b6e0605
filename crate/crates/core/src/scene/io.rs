//! Versioned JSON scene files.

use serde::{Deserialize, Serialize};

use super::{
    ColorId, GridScene, Pixel, PropertySpec, Scenario, SceneError, SceneObject, Shape, SurfaceCell,
};

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub height: f64,
    pub normal: [f64; 3],
    /// Palette rank, `null` for grey.
    pub color: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub shape: Shape,
    pub color_rank: u8,
    pub footprint: Vec<[usize; 2]>,
    #[serde(default)]
    pub removed: bool,
}

/// On-disk scene layout. Cells are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub format_version: u32,
    pub scenario: Scenario,
    pub width: usize,
    pub height: usize,
    pub palette: Vec<String>,
    pub cells: Vec<CellRecord>,
    pub objects: Vec<ObjectRecord>,
    pub properties: Vec<PropertySpec>,
    pub step_limit: usize,
    #[serde(default)]
    pub steps_elapsed: usize,
    #[serde(default)]
    pub done: bool,
}

impl SceneFile {
    pub fn from_scene(scene: &GridScene) -> Self {
        Self {
            format_version: SCENE_FORMAT_VERSION,
            scenario: scene.scenario,
            width: scene.width,
            height: scene.height,
            palette: scene.palette.clone(),
            cells: scene
                .cells
                .iter()
                .map(|c| CellRecord {
                    height: c.height,
                    normal: c.normal,
                    color: c.color.rank,
                })
                .collect(),
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    id: o.id,
                    shape: o.shape,
                    color_rank: o.color.rank.unwrap_or(0),
                    footprint: o.footprint.iter().map(|p| [p.u, p.v]).collect(),
                    removed: o.removed,
                })
                .collect(),
            properties: scene.properties.clone(),
            step_limit: scene.step_limit,
            steps_elapsed: scene.steps_elapsed,
            done: scene.done,
        }
    }

    pub fn into_scene(self) -> Result<GridScene, SceneError> {
        if self.format_version != SCENE_FORMAT_VERSION {
            return Err(SceneError::Malformed(format!(
                "unsupported format_version {} (expected {SCENE_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.cells.len() != self.width * self.height {
            return Err(SceneError::Malformed(format!(
                "{} cells for a {}x{} grid",
                self.cells.len(),
                self.width,
                self.height
            )));
        }
        if self.palette.len() < 2 {
            return Err(SceneError::Malformed("palette needs at least 2 colours".into()));
        }
        super::validate_properties(&self.properties)?;
        let palette = self.palette.len();
        let check_rank = |r: u8| {
            if (r as usize) < palette {
                Ok(())
            } else {
                Err(SceneError::Malformed(format!("colour rank {r} outside palette")))
            }
        };
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in self.cells {
            if let Some(r) = c.color {
                check_rank(r)?;
            }
            let len = c.normal.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (len - 1.0).abs() > 1e-9 || c.normal[2] <= 0.0 {
                return Err(SceneError::Malformed(format!(
                    "cell normal {:?} is not an upward unit vector",
                    c.normal
                )));
            }
            cells.push(SurfaceCell {
                height: c.height,
                normal: c.normal,
                color: ColorId { rank: c.color },
            });
        }
        let mut occupied = vec![false; self.width * self.height];
        let mut objects = Vec::with_capacity(self.objects.len());
        for o in self.objects {
            check_rank(o.color_rank)?;
            let footprint: Vec<Pixel> = o.footprint.iter().map(|&[u, v]| Pixel::new(u, v)).collect();
            for p in &footprint {
                if p.u >= self.width || p.v >= self.height {
                    return Err(SceneError::Malformed(format!(
                        "object {} footprint leaves the grid",
                        o.id
                    )));
                }
                if !o.removed {
                    let i = p.index(self.width);
                    if occupied[i] {
                        return Err(SceneError::Malformed(format!(
                            "object {} overlaps another live object",
                            o.id
                        )));
                    }
                    occupied[i] = true;
                }
            }
            objects.push(SceneObject {
                id: o.id,
                shape: o.shape,
                color: ColorId::ranked(o.color_rank),
                footprint,
                removed: o.removed,
            });
        }
        Ok(GridScene {
            width: self.width,
            height: self.height,
            cells,
            objects,
            scenario: self.scenario,
            palette: self.palette,
            properties: self.properties,
            steps_elapsed: self.steps_elapsed,
            step_limit: self.step_limit,
            done: self.done,
        })
    }

    pub fn to_json(&self) -> String {
        crate::canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        serde_json::from_str(text).map_err(|e| SceneError::Malformed(e.to_string()))
    }
}

impl GridScene {
    pub fn to_json(&self) -> String {
        SceneFile::from_scene(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        SceneFile::from_json(text)?.into_scene()
    }
}

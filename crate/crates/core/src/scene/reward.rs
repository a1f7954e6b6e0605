use super::{Action, GridScene, Pixel, RewardVector, Scenario, SceneError, Shape, StepInfo, StepOutcome};

/// Surfaces tilted at most this many degrees from horizontal count as flat.
pub const FLAT_THRESHOLD_DEG: f64 = 5.0;

const UNIT_TOLERANCE: f64 = 1e-6;

/// Angle in degrees between a surface normal and the vertical axis.
///
/// Normals are orientation-free, so a downward normal gives the same angle as
/// its upward flip and the result is always in `[0, 90]`.
pub fn flatness_angle(normal: [f64; 3]) -> Result<f64, SceneError> {
    let len = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(SceneError::NotUnit(len));
    }
    let cos = normal[2].abs().min(1.0);
    Ok(cos.acos().to_degrees())
}

pub fn is_flat(normal: [f64; 3]) -> Result<bool, SceneError> {
    Ok(flatness_angle(normal)? <= FLAT_THRESHOLD_DEG)
}

fn check_action(scene: &GridScene, action: &Action) -> Result<(), SceneError> {
    scene.check_bounds(action.pixel)?;
    if action.primitive != scene.scenario.primitive() {
        return Err(SceneError::WrongPrimitive {
            primitive: action.primitive,
            scenario: scene.scenario,
        });
    }
    Ok(())
}

/// Per-component reward for executing `action` in the current state.
pub fn sub_rewards(scene: &GridScene, action: &Action) -> Result<RewardVector, SceneError> {
    check_action(scene, action)?;
    if scene.done {
        return Err(SceneError::EpisodeFinished);
    }
    let names = scene.component_names();
    let mut reward = RewardVector::zeros(&names);
    for (k, prop) in scene.properties.iter().enumerate() {
        let raw = raw_component(scene, &prop.name, action.pixel);
        reward.components[k] = raw * prop.weight;
    }
    Ok(reward)
}

fn raw_component(scene: &GridScene, name: &str, p: Pixel) -> f64 {
    match scene.scenario {
        Scenario::Grasp => match scene.object_at(p) {
            // A suctioned bowl is a failed grasp: no component is granted.
            Some(o) if o.shape == Shape::Cube => match name {
                "shape" => 1.0,
                "color" => {
                    let denom = (scene.palette_size().max(2) - 1) as f64;
                    o.color.rank.map_or(0.0, |r| r as f64 / denom)
                }
                _ => 0.0,
            },
            _ => 0.0,
        },
        Scenario::Land => {
            let cell = scene.cell(p);
            match name {
                "flat" => f64::from(u8::from(super::is_flat(cell.normal).unwrap_or(false))),
                "colored" => f64::from(u8::from(!cell.color.is_grey())),
                _ => 0.0,
            }
        }
    }
}

/// Execute `action`, returning the pre-step reward and the successor state.
pub fn step(scene: &mut GridScene, action: &Action) -> Result<StepOutcome, SceneError> {
    let reward = sub_rewards(scene, action)?;
    let info = match scene.scenario {
        Scenario::Grasp => {
            let hit = scene
                .objects
                .iter_mut()
                .find(|o| !o.removed && o.covers(action.pixel));
            let info = match hit {
                Some(o) if o.shape == Shape::Cube => {
                    o.removed = true;
                    StepInfo::Grasped { object_id: o.id }
                }
                Some(o) => StepInfo::GraspFailed { object_id: o.id },
                None => StepInfo::EmptyPick,
            };
            scene.steps_elapsed += 1;
            scene.done = scene.live_cubes() == 0 || scene.steps_elapsed >= scene.step_limit;
            info
        }
        Scenario::Land => {
            let cell = scene.cell(action.pixel);
            let info = StepInfo::Landed {
                flat: super::is_flat(cell.normal).unwrap_or(false),
                colored: !cell.color.is_grey(),
            };
            scene.steps_elapsed += 1;
            scene.done = true;
            info
        }
    };
    Ok(StepOutcome {
        reward,
        next_observation: scene.observe(),
        done: scene.done,
        info,
    })
}

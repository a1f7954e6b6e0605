use serde::{Deserialize, Serialize};

use super::{mix_seed, TrainError};
use crate::qmap::{select_global, Approximator};
use crate::scene::{self, Action, GridScene, Pixel, ScenarioConfig};

pub const DEFAULT_EVAL_RUNS: usize = 10;
pub const DEFAULT_CHOICES_PER_RUN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub correct: usize,
    pub choices: usize,
    pub accuracy: f64,
}

/// Accuracy of a policy over independent runs: mean and population standard
/// deviation of per-run accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunResult>,
    pub mean: f64,
    pub std: f64,
}

/// Highest summed reward obtainable by any single pixel action in `scene`.
pub fn max_total_reward(scene: &GridScene) -> Result<f64, TrainError> {
    let primitive = scene.scenario.primitive();
    let mut best = f64::NEG_INFINITY;
    for v in 0..scene.height {
        for u in 0..scene.width {
            let r = scene::sub_rewards(scene, &Action::new(primitive, u, v))?;
            best = best.max(r.total());
        }
    }
    Ok(best)
}

/// Run `runs` evaluation runs of `choices` decisions each. A decision is
/// correct when its summed reward equals the best available in that scene.
///
/// Grasp runs continue in one scene (objects disappear as they are picked)
/// and draw a fresh scene when the episode ends; landing scenes take one
/// decision each.
pub fn evaluate_policy<P>(
    mut policy: P,
    config: &ScenarioConfig,
    runs: usize,
    choices: usize,
    base_seed: u64,
) -> Result<EvalReport, TrainError>
where
    P: FnMut(&GridScene) -> Action,
{
    config.validate()?;
    let mut results = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut scene_index = 0u64;
        let mut scene = config.generate(mix_seed(base_seed, run as u64, scene_index))?;
        let mut correct = 0;
        for _ in 0..choices {
            if scene.done {
                scene_index += 1;
                scene = config.generate(mix_seed(base_seed, run as u64, scene_index))?;
            }
            let best = max_total_reward(&scene)?;
            let action = policy(&scene);
            let outcome = scene::step(&mut scene, &action)?;
            if outcome.reward.total() >= best - 1e-12 {
                correct += 1;
            }
        }
        results.push(RunResult {
            run,
            correct,
            choices,
            accuracy: if choices == 0 { 0.0 } else { correct as f64 / choices as f64 },
        });
    }
    let n = results.len().max(1) as f64;
    let mean = results.iter().map(|r| r.accuracy).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalReport {
        runs: results,
        mean,
        std: var.sqrt(),
    })
}

/// Evaluate the greedy policy of a trained approximator.
pub fn evaluate<A: Approximator>(
    approx: &A,
    config: &ScenarioConfig,
    runs: usize,
    choices: usize,
    base_seed: u64,
) -> Result<EvalReport, TrainError> {
    evaluate_policy(
        |scene| {
            select_global(&approx.predict(&scene.observe()), None, scene.scenario.primitive())
                .expect("unmasked selection cannot fail")
        },
        config,
        runs,
        choices,
        base_seed,
    )
}

/// Greedy policy on the true reward: the first pixel with the best total.
pub fn oracle_action(scene: &GridScene) -> Action {
    let primitive = scene.scenario.primitive();
    let mut best = (f64::NEG_INFINITY, Pixel::new(0, 0));
    for v in 0..scene.height {
        for u in 0..scene.width {
            let r = scene::sub_rewards(scene, &Action::new(primitive, u, v))
                .map(|r| r.total())
                .unwrap_or(f64::NEG_INFINITY);
            if r > best.0 {
                best = (r, Pixel::new(u, v));
            }
        }
    }
    Action {
        primitive,
        pixel: best.1,
    }
}

//! Off-policy decomposed Q-learning.
//!
//! Every component map is regressed onto its own sub-reward plus the
//! discounted target-network value of that component at the next state's
//! *global* action (the argmax of the online composite map). Bootstrapping
//! all components from the same action keeps the sum of the component maps
//! equal to what ordinary Q-learning on the summed reward would learn.

mod checkpoint;
mod eval;
mod replay;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmap::{select_global, Approximator, FitSample};
use crate::scene::{self, Action, GridScene, Observation, Pixel, Primitive, RewardVector, SceneError};

pub use eval::{
    evaluate, evaluate_policy, max_total_reward, oracle_action, EvalReport, RunResult, DEFAULT_CHOICES_PER_RUN,
    DEFAULT_EVAL_RUNS,
};
pub use checkpoint::{metrics_jsonl, CheckpointFile, CHECKPOINT_FORMAT_VERSION};
pub use replay::ReplayBuffer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("environment error: {0}")]
    Env(#[from] SceneError),
    #[error("reward has {rewards} components but the approximator has {heads}")]
    DimensionMismatch { rewards: usize, heads: usize },
    #[error("non-finite loss {loss} at step {step} (episode {episode})")]
    NonFiniteLoss { loss: f64, step: u64, episode: u64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
}

/// Anything the trainer can act in: emits observations, accepts pixel
/// actions, and returns decomposed rewards.
pub trait Environment {
    fn observe(&self) -> Observation;
    fn primitive(&self) -> Primitive;
    fn dims(&self) -> (usize, usize);
    /// Returns `(reward, next_observation, done)`.
    fn step(&mut self, action: &Action) -> Result<(RewardVector, Observation, bool), SceneError>;
}

impl Environment for GridScene {
    fn observe(&self) -> Observation {
        GridScene::observe(self)
    }

    fn primitive(&self) -> Primitive {
        self.scenario.primitive()
    }

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn step(&mut self, action: &Action) -> Result<(RewardVector, Observation, bool), SceneError> {
        let out = scene::step(self, action)?;
        Ok((out.reward, out.next_observation, out.done))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Observation,
    pub action: Action,
    pub reward: RewardVector,
    pub next_observation: Observation,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One map per reward component.
    Decomposed,
    /// A single map on the summed reward.
    Monolithic,
}

impl std::str::FromStr for TrainMode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decomposed" => Ok(TrainMode::Decomposed),
            "monolithic" => Ok(TrainMode::Monolithic),
            other => Err(TrainError::InvalidConfig(format!(
                "unknown mode '{other}' (expected decomposed or monolithic)"
            ))),
        }
    }
}

/// Linear epsilon decay from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Steps over which to decay; `None` means 60% of the run.
    #[serde(default)]
    pub decay_steps: Option<u64>,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_steps: None,
        }
    }
}

impl EpsilonSchedule {
    pub fn resolved_decay(&self, total_steps: u64) -> u64 {
        self.decay_steps
            .unwrap_or_else(|| (total_steps as f64 * 0.6).round() as u64)
    }
}

/// Exploration rate at `step` for a schedule decaying over `decay_steps`.
pub fn epsilon_at(schedule: &EpsilonSchedule, decay_steps: u64, step: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        return schedule.end;
    }
    let frac = step as f64 / decay_steps as f64;
    schedule.start + (schedule.end - schedule.start) * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epsilon: EpsilonSchedule,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_copy_period: u64,
    pub total_steps: u64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 1e-3,
            momentum: 0.9,
            epsilon: EpsilonSchedule::default(),
            batch_size: 32,
            replay_capacity: 10_000,
            target_copy_period: 250,
            total_steps: 5_000,
            seed: 0,
            mode: TrainMode::Decomposed,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        let eps = &self.epsilon;
        if !(0.0..=1.0).contains(&eps.start) || !(0.0..=1.0).contains(&eps.end) {
            return bad("epsilon values must be in [0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_copy_period == 0 {
            return bad("batch_size, replay_capacity and target_copy_period must be positive");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity must be at least batch_size");
        }
        Ok(())
    }

    pub fn decay_steps(&self) -> u64 {
        self.epsilon.resolved_decay(self.total_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub steps: u64,
    pub total_reward: f64,
    pub per_component_reward: Vec<f64>,
    pub epsilon: f64,
    pub loss_mean: Option<f64>,
}

/// Trained approximator plus the run that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint<A> {
    pub approximator: A,
    pub config: TrainConfig,
    pub mode: TrainMode,
    pub step: u64,
    pub metrics: Vec<EpisodeMetrics>,
}

/// Regression targets per transition and component.
///
/// `y_k = r_k + gamma * Q_target_k(s', a*)`, with `a*` the argmax of the
/// online composite at `s'`; terminal transitions use `y_k = r_k`. In
/// monolithic mode rewards are first summed to a single component.
pub fn td_targets<A: Approximator>(
    batch: &[&Transition],
    online: &A,
    target: &A,
    gamma: f64,
    mode: TrainMode,
) -> Result<Vec<Vec<f64>>, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let heads = online.num_components();
    batch
        .iter()
        .map(|t| {
            let rewards = match mode {
                TrainMode::Decomposed => t.reward.components.clone(),
                TrainMode::Monolithic => vec![t.reward.total()],
            };
            if rewards.len() != heads {
                return Err(TrainError::DimensionMismatch {
                    rewards: rewards.len(),
                    heads,
                });
            }
            if t.done || gamma == 0.0 {
                return Ok(rewards);
            }
            let next = &t.next_observation;
            let global = select_global(&online.predict(next), None, t.action.primitive)
                .expect("unmasked selection cannot fail");
            let bootstrap = target.values_at(next, global.pixel);
            Ok(rewards
                .iter()
                .zip(&bootstrap)
                .map(|(r, q)| r + gamma * q)
                .collect())
        })
        .collect()
}

/// Train with `cfg.mode`. `factory(episode)` builds the environment for each
/// episode; `initial` supplies the starting parameters and must have one head
/// per reward component (or a single head in monolithic mode).
pub fn train<A, E, F>(factory: F, cfg: &TrainConfig, initial: A) -> Result<Checkpoint<A>, TrainError>
where
    A: Approximator,
    E: Environment,
    F: FnMut(u64) -> Result<E, SceneError>,
{
    run(factory, cfg, initial, cfg.mode)
}

/// Ordinary Q-learning on the summed reward with a single map.
pub fn train_monolithic<A, E, F>(factory: F, cfg: &TrainConfig, initial: A) -> Result<Checkpoint<A>, TrainError>
where
    A: Approximator,
    E: Environment,
    F: FnMut(u64) -> Result<E, SceneError>,
{
    run(factory, cfg, initial, TrainMode::Monolithic)
}

fn run<A, E, F>(mut factory: F, cfg: &TrainConfig, initial: A, mode: TrainMode) -> Result<Checkpoint<A>, TrainError>
where
    A: Approximator,
    E: Environment,
    F: FnMut(u64) -> Result<E, SceneError>,
{
    cfg.validate()?;
    if mode == TrainMode::Monolithic && initial.num_components() != 1 {
        return Err(TrainError::DimensionMismatch {
            rewards: 1,
            heads: initial.num_components(),
        });
    }
    let mut online = initial;
    online.configure_optimizer(cfg.learning_rate, cfg.momentum);
    let mut target = online.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let decay = cfg.decay_steps();
    let mut metrics = Vec::new();

    let mut episode = 0u64;
    let mut env = factory(episode)?;
    let mut obs = env.observe();
    let mut ep = EpisodeAccumulator::default();

    for step in 0..cfg.total_steps {
        let epsilon = epsilon_at(&cfg.epsilon, decay, step);
        let (w, h) = env.dims();
        let action = if rng.gen::<f64>() < epsilon {
            let pixel = Pixel::from_index(rng.gen_range(0..w * h), w);
            Action {
                primitive: env.primitive(),
                pixel,
            }
        } else {
            select_global(&online.predict(&obs), None, env.primitive()).expect("unmasked selection cannot fail")
        };
        let (reward, next_obs, done) = env.step(&action)?;
        if mode == TrainMode::Decomposed && reward.len() != online.num_components() {
            return Err(TrainError::DimensionMismatch {
                rewards: reward.len(),
                heads: online.num_components(),
            });
        }
        ep.record(&reward, epsilon);
        buffer.push(Transition {
            observation: obs,
            action,
            reward,
            next_observation: next_obs.clone(),
            done,
        });

        if buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(&mut rng, cfg.batch_size);
            let targets = td_targets(&batch, &online, &target, cfg.gamma, mode)?;
            let samples: Vec<FitSample<'_>> = batch
                .iter()
                .zip(&targets)
                .map(|(t, y)| FitSample {
                    observation: &t.observation,
                    pixel: t.action.pixel,
                    targets: y,
                })
                .collect();
            let loss = online.fit(&samples);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { loss, step, episode });
            }
            ep.losses.push(loss);
        }
        if (step + 1) % cfg.target_copy_period == 0 {
            target.copy_from(&online);
        }

        if done {
            metrics.push(ep.finish(episode));
            episode += 1;
            env = factory(episode)?;
            obs = env.observe();
        } else {
            obs = next_obs;
        }
    }

    Ok(Checkpoint {
        approximator: online,
        config: cfg.clone(),
        mode,
        step: cfg.total_steps,
        metrics,
    })
}

#[derive(Default)]
struct EpisodeAccumulator {
    steps: u64,
    components: Vec<f64>,
    losses: Vec<f64>,
    last_epsilon: f64,
}

impl EpisodeAccumulator {
    fn record(&mut self, reward: &RewardVector, epsilon: f64) {
        if self.components.len() < reward.len() {
            self.components.resize(reward.len(), 0.0);
        }
        for (acc, r) in self.components.iter_mut().zip(&reward.components) {
            *acc += r;
        }
        self.steps += 1;
        self.last_epsilon = epsilon;
    }

    fn finish(&mut self, episode: u64) -> EpisodeMetrics {
        let done = std::mem::take(self);
        let loss_mean = (!done.losses.is_empty())
            .then(|| done.losses.iter().sum::<f64>() / done.losses.len() as f64);
        EpisodeMetrics {
            episode,
            steps: done.steps,
            total_reward: done.components.iter().sum(),
            per_component_reward: done.components,
            epsilon: done.last_epsilon,
            loss_mean,
        }
    }
}

/// Mix a base seed with stream indices (SplitMix64 finaliser).
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

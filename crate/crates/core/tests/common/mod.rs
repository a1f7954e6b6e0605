//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rdqmap_core::qmap::{QMap, QMapSet};
use rdqmap_core::scene::{
    self, Action, ColorId, GridScene, Observation, Pixel, Primitive, RewardVector, Scenario, SceneError, SceneObject, Shape,
};
use rdqmap_core::trainer::Environment;

pub const BLUE: u8 = 4;
pub const RED: u8 = 0;

/// The worked example: A is a blue cube with the best colour value, B a red
/// cube with the best shape value, Selected a blue cube with the best sum.
pub struct TableOne {
    pub scene: GridScene,
    pub q: QMapSet,
    pub a: Pixel,
    pub b: Pixel,
    pub selected: Pixel,
}

pub const TABLE_ONE_A: [f64; 2] = [0.577, 0.426];
pub const TABLE_ONE_B: [f64; 2] = [0.017, 0.745];
pub const TABLE_ONE_SELECTED: [f64; 2] = [0.557, 0.516];

pub fn cube(id: u32, rank: u8, p: Pixel) -> SceneObject {
    SceneObject {
        id,
        shape: Shape::Cube,
        color: ColorId::ranked(rank),
        footprint: vec![p],
        removed: false,
    }
}

pub fn bowl(id: u32, rank: u8, p: Pixel) -> SceneObject {
    SceneObject {
        shape: Shape::Bowl,
        ..cube(id, rank, p)
    }
}

pub fn table_one() -> TableOne {
    let (a, b, selected) = (Pixel::new(0, 0), Pixel::new(2, 0), Pixel::new(1, 2));
    let mut scene = GridScene::empty(Scenario::Grasp, 4, 4);
    scene.objects = vec![cube(0, BLUE, a), cube(1, RED, b), cube(2, BLUE, selected)];
    let mut color = QMap::zeros(4, 4);
    let mut shape = QMap::zeros(4, 4);
    for (p, v) in [(a, TABLE_ONE_A), (b, TABLE_ONE_B), (selected, TABLE_ONE_SELECTED)] {
        color.set(p, v[0]);
        shape.set(p, v[1]);
    }
    let q = QMapSet::new(vec![color, shape], vec!["color".into(), "shape".into()], vec![1.0, 1.0]).unwrap();
    TableOne {
        scene,
        q,
        a,
        b,
        selected,
    }
}

/// A deterministic finite MDP whose states are shown as one-hot channels on
/// a `num_actions x 1` grid; pixel `u` is action `u`.
#[derive(Debug, Clone)]
pub struct ToyMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub next: Vec<Vec<usize>>,
    pub rewards: Vec<Vec<[f64; 2]>>,
    pub terminal: Vec<bool>,
}

impl ToyMdp {
    /// Random transitions and rewards from a small LCG, with the last two
    /// states absorbing-terminal.
    pub fn random(num_states: usize, num_actions: usize, seed: u64) -> Self {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next_u = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let terminal: Vec<bool> = (0..num_states).map(|s| s >= num_states - 2).collect();
        let mut next = Vec::new();
        let mut rewards = Vec::new();
        for _ in 0..num_states {
            next.push((0..num_actions).map(|_| (next_u() * num_states as f64) as usize % num_states).collect());
            rewards.push((0..num_actions).map(|_| [next_u(), next_u()]).collect());
        }
        Self {
            num_states,
            num_actions,
            next,
            rewards,
            terminal,
        }
    }

    pub fn observation(&self, s: usize) -> Observation {
        let mut o = Observation::zeros(self.num_actions, 1, self.num_states);
        for u in 0..self.num_actions {
            o.set(u, 0, s, 1.0);
        }
        o
    }

    /// Exact optimal values of the summed reward by value iteration:
    /// `Q(s,a) = r(s,a) + gamma * [next not terminal-entry] * max_b Q(s',b)`.
    /// Moving into a terminal state ends the episode.
    pub fn value_iteration(&self, gamma: f64) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.num_actions]; self.num_states];
        loop {
            let mut delta: f64 = 0.0;
            let mut fresh = q.clone();
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let s2 = self.next[s][a];
                    let r: f64 = self.rewards[s][a].iter().sum();
                    let boot = if self.terminal[s2] {
                        0.0
                    } else {
                        q[s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    };
                    fresh[s][a] = r + gamma * boot;
                    delta = delta.max((fresh[s][a] - q[s][a]).abs());
                }
            }
            q = fresh;
            if delta < 1e-13 {
                return q;
            }
        }
    }

    /// Per-component values of the greedy policy of `q_total`.
    pub fn component_values(&self, q_total: &[Vec<f64>], gamma: f64) -> Vec<Vec<[f64; 2]>> {
        let greedy: Vec<usize> = q_total.iter().map(|row| argmax(row)).collect();
        let mut qk = vec![vec![[0.0; 2]; self.num_actions]; self.num_states];
        loop {
            let mut delta: f64 = 0.0;
            let mut fresh = qk.clone();
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let s2 = self.next[s][a];
                    for k in 0..2 {
                        let boot = if self.terminal[s2] { 0.0 } else { qk[s2][greedy[s2]][k] };
                        fresh[s][a][k] = self.rewards[s][a][k] + gamma * boot;
                        delta = delta.max((fresh[s][a][k] - qk[s][a][k]).abs());
                    }
                }
            }
            qk = fresh;
            if delta < 1e-13 {
                return qk;
            }
        }
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub struct ToyEnv<'a> {
    pub mdp: &'a ToyMdp,
    pub state: usize,
}

impl Environment for ToyEnv<'_> {
    fn observe(&self) -> Observation {
        self.mdp.observation(self.state)
    }

    fn primitive(&self) -> Primitive {
        Primitive::PickUp
    }

    fn dims(&self) -> (usize, usize) {
        (self.mdp.num_actions, 1)
    }

    fn step(&mut self, action: &Action) -> Result<(RewardVector, Observation, bool), SceneError> {
        let a = action.pixel.u;
        let r = self.mdp.rewards[self.state][a];
        self.state = self.mdp.next[self.state][a];
        Ok((
            RewardVector {
                names: vec!["x".into(), "y".into()],
                components: r.to_vec(),
            },
            self.mdp.observation(self.state),
            self.mdp.terminal[self.state],
        ))
    }
}

/// Optimal summed-reward action values of a small Grasp scene, by value
/// iteration over the set of removed objects. Keys are the removal masks.
pub fn grasp_value_iteration(scene: &GridScene, gamma: f64) -> HashMap<Vec<bool>, Vec<f64>> {
    let n = scene.objects.len();
    let pixels = scene.width * scene.height;
    let mut masks: Vec<Vec<bool>> = (0..1u32 << n).map(|m| (0..n).map(|i| m >> i & 1 == 1).collect()).collect();
    masks.sort();
    let state_for = |mask: &[bool]| {
        let mut s = scene.clone();
        for (o, &r) in s.objects.iter_mut().zip(mask) {
            o.removed = r;
        }
        s.steps_elapsed = 0;
        s.done = s.live_cubes() == 0;
        s
    };
    // Transition table: (mask, pixel) -> (reward, next mask, done).
    let mut table = HashMap::new();
    for mask in &masks {
        let s = state_for(mask);
        if s.done {
            continue;
        }
        for i in 0..pixels {
            let mut s2 = s.clone();
            let p = Pixel::from_index(i, scene.width);
            let out = scene::step(&mut s2, &Action::new(Primitive::PickUp, p.u, p.v)).unwrap();
            let next: Vec<bool> = s2.objects.iter().map(|o| o.removed).collect();
            table.insert((mask.clone(), i), (out.reward.total(), next, s2.live_cubes() == 0));
        }
    }
    let mut q: HashMap<Vec<bool>, Vec<f64>> = masks.iter().map(|m| (m.clone(), vec![0.0; pixels])).collect();
    loop {
        let mut delta: f64 = 0.0;
        let mut fresh = q.clone();
        for ((mask, i), (r, next, done)) in &table {
            let boot = if *done {
                0.0
            } else {
                q[next].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let v = r + gamma * boot;
            let slot = &mut fresh.get_mut(mask).unwrap()[*i];
            delta = delta.max((v - *slot).abs());
            *slot = v;
        }
        q = fresh;
        if delta < 1e-12 {
            return q;
        }
    }
}

//! Reward-decomposed pixel-wise Q-Maps.
//!
//! Scenes expose one reward component per task property; an approximator
//! learns one Q-Map per component, actions are chosen on the weighted sum of
//! the maps, and the per-component values feed shallow and contrastive
//! explanations.

pub mod scene;
pub mod qmap;
pub mod trainer;
pub mod explain;
pub mod llm;

use serde::Serialize;

/// Serialize with sorted object keys and shortest round-trip float formatting.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&v).expect("json value")
}

//! Shallow and contrastive explanations of a greedy decision.
//!
//! Given one snapshot of component Q-Maps, the explainer picks `K + 1`
//! candidate actions (the selected global action plus the argmax of every
//! component map), attributes each to its components, and computes reward
//! difference explanations (RDX): per-component differences in weighted
//! Q-value between two actions.

mod chart;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmap::{q_at, select_component, select_global, QMapError, QMapSet};
use crate::scene::{Action, GridScene, Pixel};

pub use chart::{render_chart, render_svg, Bar, BarGroup, ChartData};
pub use text::{template_contrastive, template_shallow};

/// Label of the chosen action among the candidates.
pub const SELECTED: &str = "Selected";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error(transparent)]
    QMap(#[from] QMapError),
    #[error("Q-Maps are {qw}x{qh} but the scene is {sw}x{sh}")]
    DimensionMismatch { qw: usize, qh: usize, sw: usize, sh: usize },
    #[error("no RDX for pair ({0}, {1}) in this bundle")]
    MissingPair(String, String),
    #[error("unknown candidate '{0}'")]
    UnknownCandidate(String),
}

/// One action of interest with its attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// `Selected`, then `A`, `B`, ... for the argmax of each component map.
    pub label: String,
    pub action: Action,
    /// What occupies the pixel, e.g. "blue cube" or "empty cell".
    pub object: String,
    /// Raw component values at the pixel.
    pub raw_values: Vec<f64>,
    /// Component values scaled by the preference weights.
    pub values: Vec<f64>,
    /// Sum of the weighted values.
    pub overall: f64,
    /// Component whose map this candidate maximises; `None` for Selected.
    pub component: Option<usize>,
}

/// The selected action plus one candidate per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub component_names: Vec<String>,
    pub weights: Vec<f64>,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn selected(&self) -> &Candidate {
        &self.candidates[0]
    }

    pub fn get(&self, label: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowExplanation {
    pub action: Action,
    /// Weighted component values.
    pub component_values: Vec<f64>,
    pub dominant: usize,
    pub dominant_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdx {
    /// Candidate labels `(a_i, a_j)`.
    pub pair: (String, String),
    pub actions: (Action, Action),
    /// `w_k * Q_k(a_i) - w_k * Q_k(a_j)` for each component.
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveText {
    pub pair: (String, String),
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texts {
    pub shallow: String,
    pub contrastive: Vec<ContrastiveText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentInfo {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

/// Everything the explainer derives from one Q-Map snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub scene_id: String,
    pub components: ComponentInfo,
    pub selected: Action,
    pub candidates: Vec<Candidate>,
    pub shallow: ShallowExplanation,
    pub rdx: Vec<Rdx>,
    pub texts: Texts,
}

impl ExplanationBundle {
    pub fn candidate(&self, label: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.label == label)
    }

    pub fn rdx_for(&self, first: &str, second: &str) -> Option<&Rdx> {
        self.rdx.iter().find(|r| r.pair.0 == first && r.pair.1 == second)
    }

    pub fn to_json(&self) -> String {
        crate::canonical_json(self)
    }
}

/// Label of the candidate for component `k`: A, B, ..., Z, then A1, B1, ...
pub fn component_label(k: usize) -> String {
    let letter = (b'A' + (k % 26) as u8) as char;
    match k / 26 {
        0 => letter.to_string(),
        n => format!("{letter}{n}"),
    }
}

fn check_dims(q: &QMapSet, scene: &GridScene) -> Result<(), ExplainError> {
    if q.width() != scene.width || q.height() != scene.height {
        return Err(ExplainError::DimensionMismatch {
            qw: q.width(),
            qh: q.height(),
            sw: scene.width,
            sh: scene.height,
        });
    }
    Ok(())
}

fn weighted(q: &QMapSet, a: &Action) -> Result<Vec<f64>, QMapError> {
    Ok(q_at(q, a)?.iter().zip(&q.weights).map(|(x, w)| w * x).collect())
}

fn candidate(q: &QMapSet, scene: &GridScene, label: String, action: Action, component: Option<usize>) -> Result<Candidate, ExplainError> {
    let raw_values = q_at(q, &action)?;
    let values: Vec<f64> = raw_values.iter().zip(&q.weights).map(|(x, w)| w * x).collect();
    Ok(Candidate {
        label,
        object: scene.label_at(action.pixel),
        overall: values.iter().sum(),
        raw_values,
        values,
        action,
        component,
    })
}

/// The selected global action followed by each component map's argmax.
pub fn candidates(q: &QMapSet, scene: &GridScene) -> Result<CandidateSet, ExplainError> {
    q.validate()?;
    check_dims(q, scene)?;
    let primitive = scene.scenario.primitive();
    let mut out = vec![candidate(q, scene, SELECTED.to_string(), select_global(q, None, primitive)?, None)?];
    for k in 0..q.len() {
        let a = select_component(q, k, None, primitive)?;
        out.push(candidate(q, scene, component_label(k), a, Some(k))?);
    }
    Ok(CandidateSet {
        component_names: q.component_names.clone(),
        weights: q.weights.clone(),
        candidates: out,
    })
}

/// Dominant component of `a`: the largest weighted value, ties to the
/// lowest index.
pub fn shallow(q: &QMapSet, a: &Action) -> Result<ShallowExplanation, ExplainError> {
    let values = weighted(q, a)?;
    let mut dominant = 0;
    for (k, &x) in values.iter().enumerate() {
        if x > values[dominant] {
            dominant = k;
        }
    }
    Ok(ShallowExplanation {
        action: *a,
        dominant_name: q.component_names[dominant].clone(),
        component_values: values,
        dominant,
    })
}

/// Per-component weighted value differences between two actions.
pub fn rdx(q: &QMapSet, a_i: &Action, a_j: &Action) -> Result<Vec<f64>, ExplainError> {
    let (vi, vj) = (weighted(q, a_i)?, weighted(q, a_j)?);
    Ok(vi.iter().zip(&vj).map(|(x, y)| x - y).collect())
}

/// Candidate pairs to contrast: Selected against each other candidate, then
/// every pair among the other candidates in label order.
pub fn rdx_pairs(set: &CandidateSet) -> Vec<(usize, usize)> {
    let n = set.candidates.len();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|j| (0, j)).collect();
    for i in 1..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Optional additions to the default explanation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainRequest {
    /// Extra pixels to explain, labelled `P1`, `P2`, ... after the
    /// component candidates.
    pub pixels: Vec<Pixel>,
    /// Pairs to contrast, by candidate label. `None` means Selected against
    /// every other candidate plus all pairs among the others.
    pub pairs: Option<Vec<(String, String)>>,
}

/// Build the full explanation of the greedy decision in `scene`.
pub fn explain(q: &QMapSet, scene: &GridScene) -> Result<ExplanationBundle, ExplainError> {
    explain_with(q, scene, &ExplainRequest::default())
}

/// [`explain`] with user-chosen extra pixels and contrast pairs.
pub fn explain_with(q: &QMapSet, scene: &GridScene, request: &ExplainRequest) -> Result<ExplanationBundle, ExplainError> {
    let mut set = candidates(q, scene)?;
    let primitive = scene.scenario.primitive();
    for (i, &p) in request.pixels.iter().enumerate() {
        let action = Action { primitive, pixel: p };
        set.candidates.push(candidate(q, scene, format!("P{}", i + 1), action, None)?);
    }
    let selected = set.selected().action;
    let shallow_expl = shallow(q, &selected)?;
    let index_of = |label: &str| set.candidates.iter().position(|c| c.label == label);
    let pairs: Vec<(usize, usize)> = match &request.pairs {
        None => rdx_pairs(&set),
        Some(named) => named
            .iter()
            .map(|(a, b)| match (index_of(a), index_of(b)) {
                (Some(i), Some(j)) => Ok((i, j)),
                _ => Err(ExplainError::MissingPair(a.clone(), b.clone())),
            })
            .collect::<Result<_, _>>()?,
    };
    let mut rdx_list = Vec::new();
    for (i, j) in pairs {
        let (ci, cj) = (&set.candidates[i], &set.candidates[j]);
        rdx_list.push(Rdx {
            pair: (ci.label.clone(), cj.label.clone()),
            actions: (ci.action, cj.action),
            deltas: rdx(q, &ci.action, &cj.action)?,
        });
    }
    let mut bundle = ExplanationBundle {
        scene_id: scene.digest(),
        components: ComponentInfo {
            names: set.component_names,
            weights: set.weights,
        },
        selected,
        candidates: set.candidates,
        shallow: shallow_expl,
        rdx: rdx_list,
        texts: Texts {
            shallow: String::new(),
            contrastive: Vec::new(),
        },
    };
    bundle.texts.shallow = template_shallow(&bundle);
    let pairs: Vec<(String, String)> = bundle.rdx.iter().map(|r| r.pair.clone()).collect();
    for (a, b) in pairs {
        let text = template_contrastive(&bundle, &a, &b)?;
        bundle.texts.contrastive.push(ContrastiveText { pair: (a, b), text });
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmap::QMap;
    use crate::scene::{Pixel, Primitive, Scenario};

    fn qset(maps: Vec<Vec<f64>>, w: usize, h: usize, weights: Vec<f64>) -> QMapSet {
        let names = (0..maps.len()).map(|k| format!("c{k}")).collect();
        QMapSet::new(
            maps.into_iter().map(|v| QMap::from_values(w, h, v).unwrap()).collect(),
            names,
            weights,
        )
        .unwrap()
    }

    #[test]
    fn k_plus_one_candidates() {
        let scene = GridScene::empty(Scenario::Grasp, 2, 2);
        let q = qset(vec![vec![0.1, 0.9, 0.0, 0.2], vec![0.5, 0.0, 0.7, 0.1]], 2, 2, vec![1.0, 1.0]);
        let set = candidates(&q, &scene).unwrap();
        let labels: Vec<&str> = set.candidates.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["Selected", "A", "B"]);
        assert_eq!(set.get("A").unwrap().action.pixel, Pixel::new(1, 0));
        assert_eq!(set.get("B").unwrap().action.pixel, Pixel::new(0, 1));
        // Composite: 0.6, 0.9, 0.7, 0.3.
        assert_eq!(set.selected().action.pixel, Pixel::new(1, 0));
        assert!(set.candidates.iter().all(|c| c.object == "empty cell"));
    }

    #[test]
    fn peaked_maps_collapse_to_one_pixel() {
        let scene = GridScene::empty(Scenario::Grasp, 3, 1);
        let q = qset(vec![vec![0.0, 2.0, 0.0]; 3], 3, 1, vec![1.0; 3]);
        let set = candidates(&q, &scene).unwrap();
        assert_eq!(set.candidates.len(), 4);
        assert!(set.candidates.iter().all(|c| c.action.pixel == Pixel::new(1, 0)));
    }

    #[test]
    fn shallow_tie_and_weight_rules() {
        let a = Action::new(Primitive::PickUp, 0, 0);
        let q = qset(vec![vec![0.4], vec![0.4]], 1, 1, vec![1.0, 1.0]);
        assert_eq!(shallow(&q, &a).unwrap().dominant, 0);
        let q = qset(vec![vec![0.9], vec![0.4]], 1, 1, vec![0.0, 1.0]);
        let s = shallow(&q, &a).unwrap();
        assert_eq!((s.dominant, s.component_values.clone()), (1, vec![0.0, 0.4]));
    }

    #[test]
    fn rdx_self_is_zero_and_weighted() {
        let q = qset(vec![vec![1.0, 0.5], vec![0.25, 1.0]], 2, 1, vec![2.0, 1.0]);
        let (a, b) = (Action::new(Primitive::PickUp, 0, 0), Action::new(Primitive::PickUp, 1, 0));
        assert_eq!(rdx(&q, &a, &a).unwrap(), vec![0.0, 0.0]);
        assert_eq!(rdx(&q, &a, &b).unwrap(), vec![1.0, -0.75]);
        let out = Action::new(Primitive::PickUp, 2, 0);
        assert!(matches!(rdx(&q, &a, &out), Err(ExplainError::QMap(QMapError::OutOfBounds { .. }))));
    }

    #[test]
    fn pair_enumeration() {
        let scene = GridScene::empty(Scenario::Grasp, 2, 2);
        let q = qset(vec![vec![0.0; 4]; 3], 2, 2, vec![1.0; 3]);
        let bundle = explain(&q, &scene).unwrap();
        let pairs: Vec<String> = bundle.rdx.iter().map(|r| format!("{},{}", r.pair.0, r.pair.1)).collect();
        assert_eq!(
            pairs,
            ["Selected,A", "Selected,B", "Selected,C", "A,B", "A,C", "B,C"]
        );
        assert_eq!(bundle.texts.contrastive.len(), 6);
    }

    #[test]
    fn extra_pixels_and_chosen_pairs() {
        let scene = GridScene::empty(Scenario::Grasp, 3, 1);
        let q = qset(vec![vec![0.1, 0.9, 0.3], vec![0.5, 0.0, 0.2]], 3, 1, vec![1.0, 1.0]);
        let req = ExplainRequest {
            pixels: vec![Pixel::new(2, 0)],
            pairs: Some(vec![("Selected".into(), "P1".into())]),
        };
        let b = explain_with(&q, &scene, &req).unwrap();
        assert_eq!(b.candidates.last().unwrap().label, "P1");
        assert_eq!(b.rdx.len(), 1);
        let d = &b.rdx[0].deltas;
        assert!((d[0] - 0.6).abs() < 1e-15 && (d[1] + 0.2).abs() < 1e-15);
        let bad = ExplainRequest {
            pixels: vec![],
            pairs: Some(vec![("Selected".into(), "P1".into())]),
        };
        assert_eq!(
            explain_with(&q, &scene, &bad),
            Err(ExplainError::MissingPair("Selected".into(), "P1".into()))
        );
        let out = ExplainRequest {
            pixels: vec![Pixel::new(5, 0)],
            pairs: None,
        };
        assert!(explain_with(&q, &scene, &out).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let scene = GridScene::empty(Scenario::Grasp, 3, 3);
        let q = qset(vec![vec![0.0; 4]], 2, 2, vec![1.0]);
        assert!(matches!(candidates(&q, &scene), Err(ExplainError::DimensionMismatch { .. })));
    }

    #[test]
    fn labels_beyond_z() {
        assert_eq!(component_label(0), "A");
        assert_eq!(component_label(25), "Z");
        assert_eq!(component_label(26), "A1");
    }
}

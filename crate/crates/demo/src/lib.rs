//! Browser demo. Every export takes and returns JSON strings so the page
//! needs no bindings beyond `wasm-bindgen`'s string passing.
//!
//! The scene explorer scores pixels with the scene's exact one-step rewards
//! (the Q-Maps a perfectly trained agent would have with no discounting), so
//! the page can show explanations without shipping a trained network.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use rdqmap_core::canonical_json;
use rdqmap_core::explain::{explain_with, render_chart, render_svg, ExplainRequest, ExplanationBundle};
use rdqmap_core::llm::{format_value, stub_answer};
use rdqmap_core::qmap::{QMap, QMapSet};
use rdqmap_core::scene::{self, Action, GridScene, Pixel, Scenario, ScenarioConfig, SceneObject, Shape, ColorId};

#[derive(Debug, Serialize)]
pub struct CellView {
    /// CSS colour name, or `null` for grey.
    pub color: Option<String>,
    pub height: f64,
    pub flat: bool,
    /// Short text for the tooltip, e.g. "blue cube".
    pub label: String,
}

#[derive(Debug, Serialize)]
pub struct SceneView {
    pub scenario: Scenario,
    pub width: usize,
    pub height: usize,
    /// Row-major, `cells[v * width + u]`.
    pub cells: Vec<CellView>,
    pub component_names: Vec<String>,
    pub weights: Vec<f64>,
}

fn parse_scenario(name: &str) -> Result<Scenario, String> {
    match name {
        "grasp" => Ok(Scenario::Grasp),
        "land" => Ok(Scenario::Land),
        other => Err(format!("unknown scenario '{other}' (expected grasp or land)")),
    }
}

fn generate(scenario: &str, seed: u64) -> Result<GridScene, String> {
    let sc = ScenarioConfig::default_for(parse_scenario(scenario)?);
    sc.generate(seed).map_err(|e| e.to_string())
}

/// Grid contents for drawing.
pub fn scene_view_json(scenario: &str, seed: u64) -> Result<String, String> {
    let scene = generate(scenario, seed)?;
    let mut cells = Vec::with_capacity(scene.width * scene.height);
    for v in 0..scene.height {
        for u in 0..scene.width {
            let p = Pixel::new(u, v);
            let cell = scene.cell(p);
            let color = match scene.object_at(p) {
                Some(o) => Some(scene.color_name(o.color).to_string()),
                None if !cell.color.is_grey() => Some(scene.color_name(cell.color).to_string()),
                None => None,
            };
            cells.push(CellView {
                color,
                height: cell.height,
                flat: scene::is_flat(cell.normal).unwrap_or(false),
                label: scene.label_at(p),
            });
        }
    }
    Ok(canonical_json(&SceneView {
        scenario: scene.scenario,
        width: scene.width,
        height: scene.height,
        cells,
        component_names: scene.component_names(),
        weights: scene.weights(),
    }))
}

/// One map per component holding the reward each pixel would earn now.
pub fn reward_maps(scene: &GridScene, weights: Vec<f64>) -> Result<QMapSet, String> {
    let names = scene.component_names();
    let mut maps = vec![QMap::zeros(scene.width, scene.height); names.len()];
    let primitive = scene.scenario.primitive();
    for v in 0..scene.height {
        for u in 0..scene.width {
            let r = scene::sub_rewards(scene, &Action::new(primitive, u, v)).map_err(|e| e.to_string())?;
            for (map, x) in maps.iter_mut().zip(&r.components) {
                map.set(Pixel::new(u, v), *x);
            }
        }
    }
    QMapSet::new(maps, names, weights).map_err(|e| e.to_string())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainInput {
    /// Preference weights; the scene's defaults when absent.
    pub weights: Option<Vec<f64>>,
    /// Up to two clicked pixels, explained as P1 and P2.
    pub pixels: Vec<Pixel>,
}

#[derive(Debug, Serialize)]
pub struct ExplainOutput {
    pub bundle: ExplanationBundle,
    pub svg: String,
    /// Stub answers to the shallow question and to "Selected over P1" when a
    /// pixel was clicked.
    pub answers: Vec<String>,
}

/// Explain the greedy choice in a generated scene under the given weights.
pub fn explain_scene_json(scenario: &str, seed: u64, input: &str) -> Result<String, String> {
    let input: ExplainInput = if input.trim().is_empty() {
        ExplainInput::default()
    } else {
        serde_json::from_str(input).map_err(|e| e.to_string())?
    };
    if input.pixels.len() > 2 {
        return Err("select at most two pixels".into());
    }
    let scene = generate(scenario, seed)?;
    let weights = input.weights.unwrap_or_else(|| scene.weights());
    let q = reward_maps(&scene, weights)?;
    let bundle = explain_with(
        &q,
        &scene,
        &ExplainRequest {
            pixels: input.pixels.clone(),
            pairs: None,
        },
    )
    .map_err(|e| e.to_string())?;
    let verb = match scene.scenario {
        Scenario::Grasp => "pick up",
        Scenario::Land => "land on",
    };
    let mut answers = vec![stub_answer(&bundle, scene.scenario, &format!("why is pixel Selected chosen to {verb}?"))];
    if !input.pixels.is_empty() {
        answers.push(stub_answer(&bundle, scene.scenario, "why is pixel Selected preferred over pixel P1?"));
    }
    let svg = render_svg(&render_chart(&bundle));
    Ok(canonical_json(&ExplainOutput { bundle, svg, answers }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkedInput {
    /// `[color, shape]` values for A, B and Selected.
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub selected: [f64; 2],
    #[serde(default = "unit_weights")]
    pub weights: [f64; 2],
}

fn unit_weights() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Serialize)]
pub struct WorkedRow {
    pub label: String,
    pub values: Vec<String>,
    pub overall: String,
}

#[derive(Debug, Serialize)]
pub struct WorkedOutput {
    /// Which label the composite argmax actually picks.
    pub greedy: String,
    pub rows: Vec<WorkedRow>,
    /// `[pair label, color delta, shape delta]`, three decimals.
    pub rdx: Vec<[String; 3]>,
    pub texts: Vec<String>,
    pub svg: String,
}

/// The two-component worked example with editable values: three blue/red
/// cubes on a 4x4 grid whose maps hold exactly the given numbers.
pub fn worked_example_json(input: &str) -> Result<String, String> {
    let input: WorkedInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let all = [input.a, input.b, input.selected].concat();
    if all.iter().chain(&input.weights).any(|x| !x.is_finite()) {
        return Err("values and weights must be finite".into());
    }
    let (pa, pb, ps) = (Pixel::new(0, 0), Pixel::new(2, 0), Pixel::new(1, 2));
    let mut scene = GridScene::empty(Scenario::Grasp, 4, 4);
    let cube = |id: u32, rank: u8, p: Pixel| SceneObject {
        id,
        shape: Shape::Cube,
        color: ColorId::ranked(rank),
        footprint: vec![p],
        removed: false,
    };
    scene.objects = vec![cube(0, 4, pa), cube(1, 0, pb), cube(2, 4, ps)];
    let mut color = QMap::zeros(4, 4);
    let mut shape = QMap::zeros(4, 4);
    for (p, v) in [(pa, input.a), (pb, input.b), (ps, input.selected)] {
        color.set(p, v[0]);
        shape.set(p, v[1]);
    }
    let q = QMapSet::new(vec![color, shape], vec!["color".into(), "shape".into()], input.weights.to_vec())
        .map_err(|e| e.to_string())?;
    let bundle = explain_with(&q, &scene, &ExplainRequest::default()).map_err(|e| e.to_string())?;
    // Name candidates by position so the table keeps A, B, Selected even when
    // edited values move the argmaxes.
    let name_of = |p: Pixel| match (p.u, p.v) {
        (0, 0) => "A",
        (2, 0) => "B",
        (1, 2) => "Selected",
        _ => "empty cell",
    };
    let rows = [(pa, "A"), (pb, "B"), (ps, "Selected")]
        .iter()
        .map(|&(p, label)| {
            let values: Vec<f64> = q.maps.iter().zip(&q.weights).map(|(m, w)| w * m.get(p)).collect();
            WorkedRow {
                label: label.to_string(),
                overall: format_value(values.iter().sum()),
                values: values.into_iter().map(format_value).collect(),
            }
        })
        .collect();
    let value = |p: Pixel, k: usize| q.weights[k] * q.maps[k].get(p);
    let rdx = [("Selected", "A", pa), ("Selected", "B", pb), ("A", "B", pb)]
        .iter()
        .map(|&(first, second, other)| {
            let from = if first == "A" { pa } else { ps };
            [
                format!("({first}, {second})"),
                format_value(value(from, 0) - value(other, 0)),
                format_value(value(from, 1) - value(other, 1)),
            ]
        })
        .collect();
    let mut texts = vec![bundle.texts.shallow.clone()];
    texts.extend(bundle.texts.contrastive.iter().map(|c| c.text.clone()));
    Ok(canonical_json(&WorkedOutput {
        greedy: name_of(bundle.selected.pixel).to_string(),
        rows,
        rdx,
        texts,
        svg: render_svg(&render_chart(&bundle)),
    }))
}

fn js_error(e: String) -> JsError {
    JsError::new(&e)
}

/// Scene grid for drawing.
#[wasm_bindgen(js_name = sceneView)]
pub fn scene_view(scenario: &str, seed: u32) -> Result<String, JsError> {
    scene_view_json(scenario, seed as u64).map_err(js_error)
}

/// Explanation of the greedy choice under user weights and clicked pixels.
#[wasm_bindgen(js_name = explainScene)]
pub fn explain_scene(scenario: &str, seed: u32, input: &str) -> Result<String, JsError> {
    explain_scene_json(scenario, seed as u64, input).map_err(js_error)
}

/// Overall values and RDX for editable worked-example values.
#[wasm_bindgen(js_name = workedExample)]
pub fn worked_example(input: &str) -> Result<String, JsError> {
    worked_example_json(input).map_err(js_error)
}

use serde::{Deserialize, Serialize};

use crate::explain::{ExplanationBundle, SELECTED};
use crate::scene::{Scenario, DEFAULT_PALETTE};

/// Three-decimal rendering used everywhere values are shown to people or to
/// a language model. Negative zero prints as `0.000`.
pub fn format_value(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Human,
    Ai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// A conversation: one system message followed by alternating human and AI
/// turns. Turns are only ever appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub scenario: Scenario,
    pub system_text: String,
    pub messages: Vec<Message>,
}

impl PromptBundle {
    pub fn push(&mut self, role: Role, text: impl Into<String>) {
        self.messages.push(Message {
            role,
            text: text.into(),
        });
    }
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn with_article(label: &str) -> String {
    match label.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => format!("an {label}"),
        _ => format!("a {label}"),
    }
}

fn value_set(names: &[String], values: &[f64], overall: Option<f64>) -> String {
    let mut parts: Vec<String> = names
        .iter()
        .zip(values)
        .map(|(n, &v)| format!("{n}: {}", format_value(v)))
        .collect();
    if let Some(o) = overall {
        parts.push(format!("overall: {}", format_value(o)));
    }
    format!("{{{}}}", parts.join(", "))
}

/// Scene description in the style "Three pixels A, B, Selected are given,
/// where A = a blue cube, its values = {...}, ...". Lists the component
/// candidates first, then Selected, then Selected's RDX against each.
pub fn describe_scene_values(bundle: &ExplanationBundle) -> String {
    let names = &bundle.components.names;
    let mut ordered: Vec<_> = bundle.candidates.iter().filter(|c| c.label != SELECTED).collect();
    ordered.extend(bundle.candidates.iter().filter(|c| c.label == SELECTED));
    let labels: Vec<&str> = ordered.iter().map(|c| c.label.as_str()).collect();
    let entries: Vec<String> = ordered
        .iter()
        .map(|c| {
            let noun = if c.label == SELECTED { "its value" } else { "its values" };
            format!(
                "{} = {}, {noun} = {}",
                c.label,
                with_article(&c.object),
                value_set(names, &c.values, Some(c.overall))
            )
        })
        .collect();
    let pairs: Vec<String> = bundle
        .rdx
        .iter()
        .filter(|r| r.pair.0 == SELECTED)
        .map(|r| format!("({}, {}) = {}", r.pair.0, r.pair.1, value_set(names, &r.deltas, None)))
        .collect();
    format!(
        "{} pixels {} are given, where {}. The value difference RDX for action pairs in each component: {}.",
        capitalize(&number_word(ordered.len())),
        labels.join(", "),
        entries.join(", "),
        pairs.join(", ")
    )
}

const GRASP_INTRO: &str = "Context: Imagine there is a visual pick-up task that a robotic arm needs to learn to solve. The objective of the task is to pick up objects with task-specific properties. We train an agent to achieve this using Q-learning which outputs a 2D matrix of Q-values of the same size as the input image. The Q-values quantitatively describe the utility of action (pixel) choices, each corresponding to executing the pick-up primitive at a 3D position mapped from that pixel. The Q-value of every action (and its associated object)";

const LAND_INTRO: &str = "Context: Imagine there is a visual landing task that a flying agent needs to learn to solve. The objective of the task is to land on surfaces with task-specific properties. We train an agent to achieve this using Q-learning which outputs a 2D matrix of Q-values of the same size as the input image. The Q-values quantitatively describe the utility of action (pixel) choices, each corresponding to executing a touchdown at a 3D position mapped from that pixel. The Q-value of every action (and its associated surface)";

fn component_clause(name: &str, palette: &[String]) -> String {
    match name {
        "shape" => "its score in being a cube (not a bowl)".to_string(),
        "color" => format!("in which color ranking ({})", palette.join(" < ")),
        "flat" => "whether its surface is flat (tilted by at most 5 degrees)".to_string(),
        "colored" => "whether its surface is colored (not grey)".to_string(),
        other => format!("its {other} score"),
    }
}

fn decomposition_sentence(names: &[String], palette: &[String]) -> String {
    let k = names.len();
    let has = |n: &str| names.iter().any(|x| x == n);
    if k == 2 && has("color") && has("shape") {
        // The pick-up wording names the shape component first.
        return format!(
            " is further decomposed into two component values, one evaluating {} and the other being {}, summing up to its overall Q-value.",
            component_clause("shape", palette),
            component_clause("color", palette)
        );
    }
    if k == 2 && has("flat") && has("colored") {
        return format!(
            " is further decomposed into two component values, one evaluating {} and the other {}, summing up to its overall Q-value.",
            component_clause("flat", palette),
            component_clause("colored", palette)
        );
    }
    if k == 1 {
        return format!(
            " consists of a single component value, {} ({}), which is its overall Q-value.",
            names[0],
            component_clause(&names[0], palette)
        );
    }
    let clauses: Vec<String> = names
        .iter()
        .map(|n| format!("{n} (evaluating {})", component_clause(n, palette)))
        .collect();
    format!(
        " is further decomposed into {} component values: {}, summing up to its overall Q-value.",
        number_word(k),
        clauses.join("; ")
    )
}

/// System prompt plus empty conversation for the default colour palette.
pub fn build_prompt(scenario: Scenario, bundle: &ExplanationBundle) -> PromptBundle {
    let palette: Vec<String> = DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect();
    build_prompt_with_palette(scenario, bundle, &palette)
}

/// Task context, question taxonomy and scene description as the system
/// message.
pub fn build_prompt_with_palette(scenario: Scenario, bundle: &ExplanationBundle, palette: &[String]) -> PromptBundle {
    let intro = match scenario {
        Scenario::Grasp => GRASP_INTRO,
        Scenario::Land => LAND_INTRO,
    };
    let context = format!("{intro}{}", decomposition_sentence(&bundle.components.names, palette));
    let system_text = format!(
        "{context}\n\n\
         You are helping humans understand the action choices of the trained Q-agent given a scene of the task. \
         In each turn, you are provided with {} action choices along with their component values and overall values of the scene.\n\
         The user will ask you two types of questions:\n\
         1) shallow question - why is an action chosen?\n\
         2) contrastive question - why is one action preferred over another?\n\
         Please answer those questions by text and keep the text simple and clear.\n\n\
         Scene Description: {}",
        number_word(bundle.candidates.len()),
        describe_scene_values(bundle)
    );
    PromptBundle {
        scenario,
        messages: vec![Message {
            role: Role::System,
            text: system_text.clone(),
        }],
        system_text,
    }
}

/// The shallow question as phrased for the scenario.
pub fn shallow_question(scenario: Scenario) -> String {
    match scenario {
        Scenario::Grasp => "why is pixel Selected chosen to pick up?".to_string(),
        Scenario::Land => "why is pixel Selected chosen to land on?".to_string(),
    }
}

pub fn contrastive_question(first: &str, second: &str) -> String {
    format!("why is pixel {first} preferred over pixel {second}?")
}

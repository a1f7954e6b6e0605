//! Offline answers built from the explanation bundle alone. Every number in
//! an answer is a bundle value (or the magnitude of one) at three decimals.

use crate::explain::{ExplanationBundle, SELECTED};
use crate::scene::Scenario;

use super::prompt::format_value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionKind {
    Shallow { label: String },
    Contrastive { first: String, second: String },
    Unknown,
}

/// Candidate labels mentioned in the question, in order of appearance.
/// A label counts when it is a whole word ("pixel B", "B?").
fn mentioned_labels(question: &str, bundle: &ExplanationBundle) -> Vec<String> {
    let words: Vec<&str> = question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let is_label = bundle.candidates.iter().any(|c| c.label.eq_ignore_ascii_case(w));
        // Single letters are only labels when introduced as pixels or actions,
        // so that the article "a" is not mistaken for candidate A.
        let introduced = i > 0 && matches!(words[i - 1].to_ascii_lowercase().as_str(), "pixel" | "action" | "candidate");
        if is_label && (w.len() > 1 || introduced) {
            let label = bundle
                .candidates
                .iter()
                .find(|c| c.label.eq_ignore_ascii_case(w))
                .map(|c| c.label.clone())
                .expect("checked above");
            out.push(label);
        }
    }
    out
}

/// Keyword rules: "preferred over" / "why ... over" is contrastive,
/// "why ... chosen" is shallow; anything else is unknown.
pub fn classify_question(question: &str, bundle: &ExplanationBundle) -> QuestionKind {
    let q = question.to_lowercase();
    let labels = mentioned_labels(question, bundle);
    let contrastive = q.contains("preferred over") || (q.contains("why") && q.contains(" over "));
    if contrastive {
        return match labels.as_slice() {
            [first, second, ..] if first != second => QuestionKind::Contrastive {
                first: first.clone(),
                second: second.clone(),
            },
            [other] if other != SELECTED => QuestionKind::Contrastive {
                first: SELECTED.to_string(),
                second: other.clone(),
            },
            _ => QuestionKind::Unknown,
        };
    }
    if q.contains("why") && q.contains("chosen") {
        let label = labels.first().cloned().unwrap_or_else(|| SELECTED.to_string());
        return QuestionKind::Shallow { label };
    }
    QuestionKind::Unknown
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

const INABILITY: &str = "I can only answer two kinds of questions about this scene: why a pixel is chosen (for example \"why is pixel Selected chosen?\"), and why one pixel is preferred over another (for example \"why is pixel Selected preferred over pixel A?\").";

fn shallow_answer(bundle: &ExplanationBundle, scenario: Scenario, label: &str) -> String {
    let verb = match scenario {
        Scenario::Grasp => "to pick up",
        Scenario::Land => "to land on",
    };
    let Some(c) = bundle.candidate(label) else {
        return INABILITY.to_string();
    };
    let names = &bundle.components.names;
    let mut dominant = 0;
    for (k, &v) in c.values.iter().enumerate() {
        if v > c.values[dominant] {
            dominant = k;
        }
    }
    let others: Vec<String> = bundle
        .candidates
        .iter()
        .filter(|o| o.label != c.label)
        .map(|o| format!("{} ({})", o.label, format_value(o.overall)))
        .collect();
    if label == SELECTED {
        format!(
            "The pixel Selected ({}) is chosen {verb} because it has the highest Q-value overall ({}) among the candidate pixels, compared with {}. The {} component contributes most to its value ({}).",
            c.object,
            format_value(c.overall),
            others.join(" and "),
            names[dominant],
            format_value(c.values[dominant]),
        )
    } else {
        let selected = bundle.candidate(SELECTED).expect("bundles always hold Selected");
        format!(
            "The pixel {} ({}) is not the chosen action: its overall Q-value is {}, while pixel Selected has the highest overall Q-value ({}). Pixel {} has the highest {} value in the scene ({}).",
            c.label,
            c.object,
            format_value(c.overall),
            format_value(selected.overall),
            c.label,
            c.component.map_or(names[dominant].as_str(), |k| names[k].as_str()),
            format_value(c.component.map_or(c.values[dominant], |k| c.values[k])),
        )
    }
}

fn contrastive_answer(bundle: &ExplanationBundle, first: &str, second: &str) -> String {
    let (deltas, sign) = match (bundle.rdx_for(first, second), bundle.rdx_for(second, first)) {
        (Some(r), _) => (&r.deltas, 1.0),
        (None, Some(r)) => (&r.deltas, -1.0),
        (None, None) => return INABILITY.to_string(),
    };
    let (a, b) = match (bundle.candidate(first), bundle.candidate(second)) {
        (Some(a), Some(b)) => (a, b),
        _ => return INABILITY.to_string(),
    };
    let names = &bundle.components.names;
    let mut higher = Vec::new();
    let mut lower = Vec::new();
    let mut tied = Vec::new();
    for (k, &d) in deltas.iter().enumerate() {
        let d = sign * d;
        if d > 0.0 {
            higher.push(k);
        } else if d < 0.0 {
            lower.push(k);
        } else {
            tied.push(k);
        }
    }
    let detail = |ks: &[usize], x: &crate::explain::Candidate, y: &crate::explain::Candidate| -> String {
        ks.iter()
            .map(|&k| {
                format!(
                    "{} {} vs {}, a difference of {}",
                    names[k],
                    format_value(x.values[k]),
                    format_value(y.values[k]),
                    format_value(deltas[k].abs())
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    };
    let names_of = |ks: &[usize]| join_names(&ks.iter().map(|&k| names[k].as_str()).collect::<Vec<_>>());

    if higher.is_empty() && lower.is_empty() {
        return format!(
            "Pixel {} and pixel {} have identical component values, so no component explains a preference between them.",
            a.label, b.label
        );
    }
    let mut text = if higher.is_empty() {
        format!(
            "Pixel {} is not preferred over pixel {} on any component: it has no higher component value.",
            a.label, b.label
        )
    } else {
        format!(
            "Pixel {} is preferred over pixel {} because it has a higher Q-value for {} ({}).",
            a.label,
            b.label,
            names_of(&higher),
            detail(&higher, a, b)
        )
    };
    if !lower.is_empty() {
        let contrast = format!(
            "pixel {} has a higher {} value than {} ({})",
            b.label,
            names_of(&lower),
            a.label,
            detail(&lower, b, a)
        );
        if higher.is_empty() {
            text.push_str(&format!(
                " Instead, {contrast}, so pixel {} has the higher overall value ({} vs {}).",
                b.label,
                format_value(b.overall),
                format_value(a.overall)
            ));
        } else if a.overall >= b.overall {
            text.push_str(&format!(
                " Although {contrast}, the higher {} value of {} makes it the better choice overall ({} vs {}).",
                names_of(&higher),
                a.label,
                format_value(a.overall),
                format_value(b.overall)
            ));
        } else {
            text.push_str(&format!(
                " However, {contrast}, and overall pixel {} still scores higher ({} vs {}).",
                b.label,
                format_value(b.overall),
                format_value(a.overall)
            ));
        }
    }
    if !tied.is_empty() {
        text.push_str(&format!(" The two pixels are tied on {}.", names_of(&tied)));
    }
    text
}

/// Deterministic answer to `question` from the bundle.
pub fn stub_answer(bundle: &ExplanationBundle, scenario: Scenario, question: &str) -> String {
    match classify_question(question, bundle) {
        QuestionKind::Shallow { label } => shallow_answer(bundle, scenario, &label),
        QuestionKind::Contrastive { first, second } => contrastive_answer(bundle, &first, &second),
        QuestionKind::Unknown => INABILITY.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::explain;
    use crate::qmap::{QMap, QMapSet};
    use crate::scene::GridScene;

    fn bundle() -> ExplanationBundle {
        let q = QMapSet::new(
            vec![
                QMap::from_values(3, 1, vec![0.5, 0.6, 0.0]).unwrap(),
                QMap::from_values(3, 1, vec![0.5, 0.1, 0.7]).unwrap(),
            ],
            vec!["color".into(), "shape".into()],
            vec![1.0, 1.0],
        )
        .unwrap();
        explain(&q, &GridScene::empty(Scenario::Grasp, 3, 1)).unwrap()
    }

    #[test]
    fn classification() {
        let b = bundle();
        assert_eq!(
            classify_question("why is pixel Selected chosen to pick up?", &b),
            QuestionKind::Shallow { label: "Selected".into() }
        );
        assert_eq!(
            classify_question("Why is pixel Selected preferred over pixel B?", &b),
            QuestionKind::Contrastive {
                first: "Selected".into(),
                second: "B".into()
            }
        );
        assert_eq!(
            classify_question("why not pick a bowl over pixel A", &b),
            QuestionKind::Contrastive {
                first: "Selected".into(),
                second: "A".into()
            }
        );
        assert_eq!(classify_question("what colour is the sky?", &b), QuestionKind::Unknown);
    }

    #[test]
    fn unknown_questions_get_inability_answer() {
        let b = bundle();
        assert_eq!(stub_answer(&b, Scenario::Grasp, "tell me a joke"), INABILITY);
        assert_eq!(stub_answer(&b, Scenario::Grasp, "why is pixel Z preferred over pixel Q?"), INABILITY);
    }

    #[test]
    fn reversed_pair_uses_negated_rdx() {
        let b = bundle();
        // Selected is pixel 0 (1.0), A pixel 1 (0.7), B pixel 2 (0.7).
        let text = stub_answer(&b, Scenario::Grasp, "why is pixel B preferred over pixel Selected?");
        assert!(text.starts_with("Pixel B is preferred over pixel Selected because it has a higher Q-value for shape"));
        assert!(text.contains("However, pixel Selected has a higher color value than B"));
    }
}

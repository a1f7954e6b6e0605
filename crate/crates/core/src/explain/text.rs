use super::{ExplainError, ExplanationBundle};

/// "{object} owns the highest Q-value in the current scene, with {feature}
/// component contributing most to the selection"
pub fn template_shallow(bundle: &ExplanationBundle) -> String {
    let selected = &bundle.candidates[0];
    format!(
        "{} owns the highest Q-value in the current scene, with {} component contributing most to the selection",
        selected.object, bundle.shallow.dominant_name
    )
}

/// Contrast the first candidate of a pair against the second. Components
/// with a strictly positive difference are reasons for the choice; the rest
/// are listed as not being reasons.
pub fn template_contrastive(bundle: &ExplanationBundle, first: &str, second: &str) -> Result<String, ExplainError> {
    let rdx = bundle
        .rdx_for(first, second)
        .ok_or_else(|| ExplainError::MissingPair(first.to_string(), second.to_string()))?;
    let chosen = bundle
        .candidate(first)
        .ok_or_else(|| ExplainError::UnknownCandidate(first.to_string()))?;
    let other = bundle
        .candidate(second)
        .ok_or_else(|| ExplainError::UnknownCandidate(second.to_string()))?;

    if rdx.deltas.iter().all(|&d| d == 0.0) {
        return Ok(format!(
            "No component distinguishes {} ({}) from {} ({}); their component values are identical",
            chosen.label, chosen.object, other.label, other.object
        ));
    }

    let names = &bundle.components.names;
    let (mut due, mut not_due) = (Vec::new(), Vec::new());
    for (k, &d) in rdx.deltas.iter().enumerate() {
        if d > 0.0 {
            due.push(names[k].as_str());
        } else {
            not_due.push(names[k].as_str());
        }
    }
    let mut text = format!("In contrast to {} ({}), {} is chosen", other.label, other.object, chosen.object);
    if !due.is_empty() {
        text.push_str(&format!(" due to its {}", due.join(", ")));
    }
    if !not_due.is_empty() {
        if !due.is_empty() {
            text.push(',');
        }
        text.push_str(&format!(" not due to its {}", not_due.join(", ")));
    }
    Ok(text)
}

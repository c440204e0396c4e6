//! Lexicon-based detection of self-contradicting directives.
//!
//! Quoted spans are source material, not directives, and are ignored.
//! A directive preceded by a negation cue within the same clause does not
//! count.

use crate::model::PrescriptionAnnotation;

/// Opposing directive families: (name, one side, the other side).
const OPPOSITES: &[(&str, &[&str], &[&str])] = &[
    (
        "volume",
        &["increase volume", "extend the session", "high total volume", "add more volume"],
        &["reduce volume", "keep total volume low", "cut volume", "lower the volume"],
    ),
    (
        "rest",
        &["complete rest", "rest day only", "no training", "avoid swimming"],
        &["main set", "hard efforts", "race pace efforts", "threshold effort"],
    ),
    (
        "intensity",
        &["race pace efforts", "supramaximal", "all-out", "maximal sprint", "vo2max-intensity"],
        &["recovery swimming only", "easy aerobic effort throughout", "keep intensity low", "avoid hard efforts"],
    ),
    (
        "drills",
        &["add the", "include the drill", "drill work"],
        &["no drills", "skip technique work", "avoid drill work"],
    ),
];

/// Phrases that direct high-intensity work.
const HIGH_INTENSITY: &[&str] = &[
    "race pace efforts",
    "supramaximal",
    "all-out",
    "maximal sprint",
    "vo2max-intensity",
    "sprint efforts",
];

const NEGATIONS: &[&str] = &["not ", "no ", "avoid ", "never ", "without ", "don't ", "do not "];

/// Lowercased text with quoted spans removed.
fn directives(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut quoted = false;
    for c in text.chars() {
        if c == '"' || c == '“' || c == '”' {
            quoted = !quoted;
            out.push(' ');
            continue;
        }
        if !quoted {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// True when `phrase` occurs without a negation cue earlier in its clause.
fn asserted(text: &str, phrase: &str) -> bool {
    let mut from = 0;
    while let Some(i) = text[from..].find(phrase) {
        let at = from + i;
        let clause_start = text[..at]
            .rfind(['.', ';', '!', '?', ','])
            .map_or(0, |p| p + 1);
        let clause = &text[clause_start..at];
        let negated = NEGATIONS.iter().any(|n| clause.contains(n))
            // The negation phrase may itself be the directive ("avoid hard efforts").
            && !NEGATIONS.iter().any(|n| phrase.starts_with(n.trim_end()));
        if !negated {
            return true;
        }
        from = at + phrase.len();
    }
    false
}

/// A description of the first contradiction found, if any.
pub fn find_contradiction(answer: &str) -> Option<String> {
    let t = directives(answer);
    for (name, a, b) in OPPOSITES {
        let hit_a = a.iter().find(|p| asserted(&t, p));
        let hit_b = b.iter().find(|p| asserted(&t, p));
        if let (Some(x), Some(y)) = (hit_a, hit_b) {
            if x != y {
                return Some(format!("contradictory {name} directives: \"{x}\" and \"{y}\""));
            }
        }
    }
    None
}

/// A description of a high-intensity directive in text whose annotation
/// claims low intensity.
pub fn find_laundering(answer: &str, annotation: &PrescriptionAnnotation) -> Option<String> {
    if annotation.is_high_intensity {
        return None;
    }
    let t = directives(answer);
    HIGH_INTENSITY.iter().find(|p| asserted(&t, p)).map(|p| {
        format!(
            "text directs \"{p}\" but the prescription is annotated as {}",
            annotation.intensity_zone
        )
    })
}

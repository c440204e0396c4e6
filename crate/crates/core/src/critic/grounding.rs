//! Grounding of answer values in the retrieved context.
//!
//! Two kinds of reference are checked. Numbers, optionally with a unit, must
//! match some context number within a relative tolerance after unit
//! normalization. Capitalized multi-word names ending in a drill or protocol
//! head noun must appear in the context (case-insensitively).

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceKind {
    Number,
    Drill,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingViolation {
    /// The reference as written in the answer.
    pub value: String,
    pub kind: ReferenceKind,
    /// Closest context number, for numeric references.
    pub nearest_context_candidate: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumberRef {
    pub text: String,
    pub value: f64,
    /// (dimension, scale to base unit)
    pub unit: Option<(&'static str, f64)>,
}

const UNITS: &[(&str, &str, f64)] = &[
    ("ml/kg/min", "vo2", 1.0),
    ("mmol/l", "lactate", 1.0),
    ("m/s²", "accel", 1.0),
    ("m/s2", "accel", 1.0),
    ("m/s", "speed", 1.0),
    ("deg/s", "angular", 1.0),
    ("bpm", "rate", 1.0),
    ("%", "percent", 1.0),
    ("percent", "percent", 1.0),
    ("ms", "time", 0.001),
    ("milliseconds", "time", 0.001),
    ("seconds", "time", 1.0),
    ("second", "time", 1.0),
    ("secs", "time", 1.0),
    ("sec", "time", 1.0),
    ("s", "time", 1.0),
    ("minutes", "time", 60.0),
    ("minute", "time", 60.0),
    ("mins", "time", 60.0),
    ("min", "time", 60.0),
    ("hours", "time", 3600.0),
    ("hour", "time", 3600.0),
    ("hrs", "time", 3600.0),
    ("hr", "time", 3600.0),
    ("h", "time", 3600.0),
    ("km", "distance", 1000.0),
    ("metres", "distance", 1.0),
    ("meters", "distance", 1.0),
    ("metre", "distance", 1.0),
    ("meter", "distance", 1.0),
    ("m", "distance", 1.0),
    ("kg", "mass", 1.0),
    ("au", "load", 1.0),
];

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?").unwrap());

fn glued(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '_')
}

/// Unit immediately following a number, if any.
fn unit_after(rest: &str) -> Option<(usize, (&'static str, f64))> {
    let trimmed = rest.trim_start_matches(' ');
    let skipped = rest.len() - trimmed.len();
    let lower = trimmed.to_lowercase();
    for (u, dim, scale) in UNITS {
        if lower.starts_with(u) && !glued(lower[u.len()..].chars().next()) {
            return Some((skipped + u.len(), (dim, *scale)));
        }
    }
    None
}

/// Standalone numbers with their units. Digits glued to letters (imu3,
/// 3rd, VO2max) are names, not values.
pub fn extract_numbers(text: &str) -> Vec<NumberRef> {
    let mut out = Vec::new();
    for m in NUMBER.find_iter(text) {
        let before = text[..m.start()].chars().next_back();
        if glued(before) || before == Some('.') {
            continue;
        }
        let rest = &text[m.end()..];
        let mut after = rest.chars();
        let next = after.next();
        // A trailing `.` followed by a digit would have been consumed; a glued
        // letter means this is part of a token like 4x50 or 3rd.
        if glued(next) && !rest.starts_with('x') {
            continue;
        }
        let Ok(value) = m.as_str().replace(',', "").parse::<f64>() else {
            continue;
        };
        let unit = unit_after(rest);
        let end = m.end() + unit.map_or(0, |(len, _)| len);
        out.push(NumberRef {
            text: text[m.start()..end].to_string(),
            value,
            unit: unit.map(|(_, u)| u),
        });
    }
    out
}

fn numbers_match(a: &NumberRef, c: &NumberRef, tol: f64, normalize: bool) -> bool {
    let (va, vc) = match (a.unit, c.unit) {
        (Some((da, sa)), Some((dc, sc))) if normalize => {
            if da != dc {
                return false;
            }
            (a.value * sa, c.value * sc)
        }
        _ => (a.value, c.value),
    };
    let scale = va.abs().max(vc.abs());
    (va - vc).abs() <= tol * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameKind {
    Drill,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameRef {
    pub text: String,
    pub kind: NameKind,
    /// Trailing sub-spans (at least two words) that would also name it, so
    /// a sentence-initial verb does not make a grounded name look invented.
    pub variants: Vec<String>,
}

const HEADS: &[(&str, NameKind)] = &[
    ("drill", NameKind::Drill),
    ("drills", NameKind::Drill),
    ("protocol", NameKind::Protocol),
    ("protocols", NameKind::Protocol),
    ("test", NameKind::Protocol),
    ("set", NameKind::Protocol),
    ("method", NameKind::Protocol),
    ("progression", NameKind::Protocol),
];

fn head_kind(word: &str) -> Option<NameKind> {
    let w = word.to_lowercase();
    HEADS.iter().find(|(h, _)| *h == w).map(|(_, k)| *k)
}

fn capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Capitalized multi-word names whose last word is a drill or protocol head.
pub fn extract_names(text: &str) -> Vec<NameRef> {
    let mut out = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let flush = |run: &mut Vec<&str>, out: &mut Vec<NameRef>| {
        if let Some(pos) = run.iter().rposition(|w| head_kind(w).is_some()) {
            if pos >= 1 {
                let words = &run[..=pos];
                let kind = head_kind(words[pos]).unwrap();
                let variants = (1..pos)
                    .map(|s| words[s..].join(" "))
                    .collect();
                out.push(NameRef {
                    text: words.join(" "),
                    kind,
                    variants,
                });
            }
        }
        run.clear();
    };
    for raw in text.split_whitespace() {
        let word = raw.trim_matches(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''));
        let ends_clause = raw.ends_with(['.', ',', ';', ':', '!', '?', ')', '"']);
        let starts_clause = raw.starts_with(['(', '"']);
        if starts_clause {
            flush(&mut run, &mut out);
        }
        let numeric_inside = !run.is_empty() && word.starts_with(|c: char| c.is_ascii_digit());
        if !word.is_empty() && (capitalized(word) || numeric_inside) {
            run.push(word);
        } else {
            flush(&mut run, &mut out);
        }
        if ends_clause {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out
}

fn contains_ci(haystack_lower: &str, needle: &str) -> bool {
    haystack_lower.contains(&needle.to_lowercase())
}

/// Every numeric value and named drill/protocol in `answer` that has no match
/// in `context`.
pub fn check_grounding(
    answer: &str,
    context: &str,
    rel_tol: f64,
    normalize_units: bool,
) -> Vec<GroundingViolation> {
    let ctx_numbers = extract_numbers(context);
    let mut out = Vec::new();
    for n in extract_numbers(answer) {
        if ctx_numbers
            .iter()
            .any(|c| numbers_match(&n, c, rel_tol, normalize_units))
        {
            continue;
        }
        let nearest = ctx_numbers
            .iter()
            .min_by(|a, b| {
                let da = (a.value - n.value).abs();
                let db = (b.value - n.value).abs();
                da.total_cmp(&db)
            })
            .map(|c| c.text.clone());
        out.push(GroundingViolation {
            value: n.text,
            kind: ReferenceKind::Number,
            nearest_context_candidate: nearest,
        });
    }
    let ctx_lower = context.to_lowercase();
    for name in extract_names(answer) {
        let grounded = contains_ci(&ctx_lower, &name.text)
            || name.variants.iter().any(|v| contains_ci(&ctx_lower, v));
        if !grounded {
            out.push(GroundingViolation {
                value: name.text,
                kind: match name.kind {
                    NameKind::Drill => ReferenceKind::Drill,
                    NameKind::Protocol => ReferenceKind::Protocol,
                },
                nearest_context_candidate: None,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CTX: &str = "Athlete VO2max 62.4 ml/kg/min; recovery 48 h after the Broken 200 Set. \
                       Use the Catch-Up Drill for 4x50 m, rest 20 s.";

    #[test]
    fn numbers_with_units_and_tolerance() {
        assert!(check_grounding("VO2max is 62.4 ml/kg/min.", CTX, 0.005, true).is_empty());
        assert!(check_grounding("about 62.6", CTX, 0.005, true).is_empty());
        let v = check_grounding("VO2max is 65.0 ml/kg/min.", CTX, 0.005, true);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].value, "65.0 ml/kg/min");
        assert_eq!(v[0].nearest_context_candidate.as_deref(), Some("62.4 ml/kg/min"));
        assert!(check_grounding("wait 2 days or 48 hours", CTX, 0.005, true).len() == 1);
        assert!(check_grounding("rest 20000 ms", CTX, 0.005, true).is_empty());
        assert!(!check_grounding("rest 20000 ms", CTX, 0.005, false).is_empty());
    }

    #[test]
    fn glued_digits_are_not_values() {
        let nums: Vec<String> = extract_numbers("imu3_acc_z and VO2max and 3rd place and 1,500 m")
            .into_iter()
            .map(|n| n.text)
            .collect();
        assert_eq!(nums, ["1,500 m"]);
    }

    #[test]
    fn names_grounded_case_insensitively() {
        assert!(check_grounding("Try the catch-up drill variant: Catch-Up Drill.", CTX, 0.005, true).is_empty());
        assert!(check_grounding("Include Catch-Up Drill daily.", CTX, 0.005, true).is_empty());
        let v = check_grounding("Add the Fingertip Drag Drill.", CTX, 0.005, true);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ReferenceKind::Drill);
        let v = check_grounding("Run the Lactate Ladder Test.", CTX, 0.005, true);
        assert_eq!(v[0].kind, ReferenceKind::Protocol);
        assert_eq!(extract_names("the Broken 200 Set")[0].text, "Broken 200 Set");
        assert!(extract_names("swim 200 Set").is_empty());
    }
}

//! Field-level validation of serialized triplets.
//!
//! Works on the raw JSON object rather than the typed struct so that one pass
//! reports every missing, extra and ill-typed field instead of stopping at the
//! first deserialization error.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use super::{
    AnchorType, ComplexityLevel, CriticVerdict, DataCategory, FinalStatus, GoldenTriplet, Persona,
    QueryType, StrokeType, ThresholdConfig, TrainingPhase,
};
use crate::error::{Error, IoContext, Result};
use crate::generator::assign_complexity;

pub const TRIPLET_FIELDS: [&str; 16] = [
    "anchor_id",
    "triplet_id",
    "query",
    "query_type",
    "persona",
    "complexity_level",
    "context",
    "expected_output",
    "anchor_type",
    "anchor_variables",
    "stroke_type",
    "training_phase",
    "data_category",
    "source_documents",
    "critic_verdict",
    "final_status",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaIssue {
    Missing(&'static str),
    Extra(String),
    IllTyped { field: &'static str, message: String },
    Invariant { name: &'static str, message: String },
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaIssue::Missing(field) => write!(f, "missing field `{field}`"),
            SchemaIssue::Extra(field) => write!(f, "unexpected field `{field}`"),
            SchemaIssue::IllTyped { field, message } => write!(f, "field `{field}`: {message}"),
            SchemaIssue::Invariant { name, message } => write!(f, "{name}: {message}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaReport {
    pub issues: Vec<SchemaIssue>,
}

impl SchemaReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_invariant(&self, name: &str) -> bool {
        self.issues
            .iter()
            .any(|i| matches!(i, SchemaIssue::Invariant { name: n, .. } if *n == name))
    }
}

fn check_field<T: DeserializeOwned>(
    obj: &Map<String, Value>,
    field: &'static str,
    issues: &mut Vec<SchemaIssue>,
) {
    match obj.get(field) {
        None => issues.push(SchemaIssue::Missing(field)),
        Some(v) => {
            if let Err(e) = serde_json::from_value::<T>(v.clone()) {
                issues.push(SchemaIssue::IllTyped {
                    field,
                    message: e.to_string(),
                });
            }
        }
    }
}

/// Validate one JSONL line. A line that is not JSON at all is a parse error
/// carrying `line_no`; everything else is reported in the returned report.
pub fn validate_triplet(line_no: usize, line: &str, thresholds: &ThresholdConfig) -> Result<SchemaReport> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(validate_value(&value, thresholds))
}

pub(crate) fn validate_value(value: &Value, thresholds: &ThresholdConfig) -> SchemaReport {
    let mut issues = Vec::new();
    let Some(obj) = value.as_object() else {
        issues.push(SchemaIssue::Invariant {
            name: "record shape",
            message: "record is not a JSON object".into(),
        });
        return SchemaReport { issues };
    };

    check_field::<String>(obj, "anchor_id", &mut issues);
    check_field::<String>(obj, "triplet_id", &mut issues);
    check_field::<String>(obj, "query", &mut issues);
    check_field::<QueryType>(obj, "query_type", &mut issues);
    check_field::<Persona>(obj, "persona", &mut issues);
    check_field::<ComplexityLevel>(obj, "complexity_level", &mut issues);
    check_field::<String>(obj, "context", &mut issues);
    check_field::<String>(obj, "expected_output", &mut issues);
    check_field::<AnchorType>(obj, "anchor_type", &mut issues);
    check_field::<Vec<String>>(obj, "anchor_variables", &mut issues);
    check_field::<StrokeType>(obj, "stroke_type", &mut issues);
    check_field::<TrainingPhase>(obj, "training_phase", &mut issues);
    check_field::<DataCategory>(obj, "data_category", &mut issues);
    check_field::<Vec<String>>(obj, "source_documents", &mut issues);
    check_field::<CriticVerdict>(obj, "critic_verdict", &mut issues);
    check_field::<FinalStatus>(obj, "final_status", &mut issues);

    for key in obj.keys() {
        if !TRIPLET_FIELDS.contains(&key.as_str()) {
            issues.push(SchemaIssue::Extra(key.clone()));
        }
    }

    if issues.is_empty() {
        match serde_json::from_value::<GoldenTriplet>(value.clone()) {
            Ok(t) => check_invariants(&t, thresholds, &mut issues),
            Err(e) => issues.push(SchemaIssue::Invariant {
                name: "record shape",
                message: e.to_string(),
            }),
        }
    }
    SchemaReport { issues }
}

fn check_invariants(t: &GoldenTriplet, thresholds: &ThresholdConfig, issues: &mut Vec<SchemaIssue>) {
    if t.triplet_id.trim().is_empty() {
        issues.push(SchemaIssue::Invariant {
            name: "empty id",
            message: "triplet_id is empty".into(),
        });
    }
    match assign_complexity(t.query_type, &t.anchor_variables) {
        Ok(expected) if expected != t.complexity_level => issues.push(SchemaIssue::Invariant {
            name: "complexity mismatch",
            message: format!(
                "{} query with {} variable(s) must be {}, found {}",
                t.query_type,
                t.anchor_variables.len(),
                expected,
                t.complexity_level
            ),
        }),
        Ok(_) => {}
        Err(_) => issues.push(SchemaIssue::Invariant {
            name: "empty anchor_variables",
            message: "anchor_variables must be non-empty".into(),
        }),
    }
    let v = &t.critic_verdict;
    // Drafts carry an unevaluated verdict. A record routed to review because
    // evaluation itself failed has no violations but a non-empty reason.
    if t.final_status != FinalStatus::Draft {
        let error_routed = !v.passed
            && v.violations.is_empty()
            && !v.critic_rejection_reason.is_empty()
            && t.final_status.is_human_reviewed_or_pending();
        if v.passed != v.violations.is_empty() && !error_routed {
            issues.push(SchemaIssue::Invariant {
                name: "verdict consistency",
                message: "passed must hold exactly when violations is empty".into(),
            });
        }
        if v.passed != v.critic_rejection_reason.is_empty() {
            issues.push(SchemaIssue::Invariant {
                name: "verdict consistency",
                message: "critic_rejection_reason must be empty exactly when passed".into(),
            });
        }
    }
    if v.iteration_count > thresholds.max_regeneration_cycles {
        issues.push(SchemaIssue::Invariant {
            name: "iteration ceiling",
            message: format!(
                "iteration_count {} exceeds {}",
                v.iteration_count, thresholds.max_regeneration_cycles
            ),
        });
    }
    if t.final_status == FinalStatus::AutoAccepted && !v.passed {
        issues.push(SchemaIssue::Invariant {
            name: "status consistency",
            message: "AutoAccepted record carries a failing verdict".into(),
        });
    }
}

/// Per-line report for a whole corpus file plus file-level checks
/// (triplet_id uniqueness, anchor references, allowed statuses).
#[derive(Debug, Default)]
pub struct CorpusValidation {
    pub records: usize,
    pub line_issues: Vec<(usize, SchemaIssue)>,
    pub parse_errors: Vec<(usize, String)>,
}

impl CorpusValidation {
    pub fn is_valid(&self) -> bool {
        self.line_issues.is_empty() && self.parse_errors.is_empty()
    }
}

pub fn validate_corpus_file(
    path: &Path,
    thresholds: &ThresholdConfig,
    allowed_status: &[FinalStatus],
    known_anchor_ids: Option<&HashSet<String>>,
) -> Result<CorpusValidation> {
    let text = std::fs::read_to_string(path).at(path)?;
    let mut out = CorpusValidation::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        out.records += 1;
        let report = match validate_triplet(line_no, line, thresholds) {
            Ok(r) => r,
            Err(e) => {
                out.parse_errors.push((line_no, e.to_string()));
                continue;
            }
        };
        out.line_issues
            .extend(report.issues.into_iter().map(|issue| (line_no, issue)));
        if let Ok(t) = serde_json::from_str::<GoldenTriplet>(line) {
            if !seen.insert(t.triplet_id.clone()) {
                out.line_issues.push((
                    line_no,
                    SchemaIssue::Invariant {
                        name: "duplicate triplet_id",
                        message: t.triplet_id.clone(),
                    },
                ));
            }
            if !allowed_status.is_empty() && !allowed_status.contains(&t.final_status) {
                out.line_issues.push((
                    line_no,
                    SchemaIssue::Invariant {
                        name: "status not allowed in file",
                        message: t.final_status.to_string(),
                    },
                ));
            }
            if let Some(ids) = known_anchor_ids {
                if !ids.contains(&t.anchor_id) {
                    out.line_issues.push((
                        line_no,
                        SchemaIssue::Invariant {
                            name: "dangling anchor_id",
                            message: t.anchor_id.clone(),
                        },
                    ));
                }
            }
        }
    }
    Ok(out)
}

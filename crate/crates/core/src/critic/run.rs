//! The validation stage: every draft ends up in exactly one output file.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{ContextResolver, Critic};
use crate::checkpoint;
use crate::corpus::{append_corpus, file_len, read_corpus, read_jsonl, truncate_to, write_json_atomic, ReadMode};
use crate::error::{Error, Result};
use crate::model::{
    AnnotationRecord, CriticVerdict, DraftTriplet, FinalStatus, GoldenTriplet, RuleId, Stage,
};

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    pub drafts_path: PathBuf,
    pub annotations_path: PathBuf,
    pub validated_path: PathBuf,
    pub hitl_path: PathBuf,
    pub report_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Stop with `Error::Interrupted` after this many drafts in this call.
    pub stop_after: Option<usize>,
}

impl ValidationOptions {
    /// Standard file names inside one directory.
    pub fn in_dir(dir: &std::path::Path) -> Self {
        ValidationOptions {
            drafts_path: dir.join("golden_triplets.jsonl"),
            annotations_path: dir.join("prescription_annotations.jsonl"),
            validated_path: dir.join("validated_triplets.jsonl"),
            hitl_path: dir.join("hitl_triplets.jsonl"),
            report_path: dir.join("validation_report.json"),
            checkpoint_path: dir.join("critic_checkpoint.json"),
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub direct_accepts: usize,
    pub regenerated_accepts: usize,
    pub hitl: usize,
    pub initially_rejected: usize,
    /// Drafts routed to review because evaluation or regeneration failed.
    pub routing_errors: usize,
    /// Violations across all evaluation cycles.
    pub violations_by_rule: BTreeMap<RuleId, usize>,
    pub total_violations: usize,
    pub acceptance_rate_pct: f64,
    pub recovery_rate_pct: f64,
}

impl Default for ValidationReport {
    fn default() -> Self {
        ValidationReport {
            total: 0,
            direct_accepts: 0,
            regenerated_accepts: 0,
            hitl: 0,
            initially_rejected: 0,
            routing_errors: 0,
            violations_by_rule: RuleId::ALL.iter().map(|r| (*r, 0)).collect(),
            total_violations: 0,
            acceptance_rate_pct: 0.0,
            recovery_rate_pct: 0.0,
        }
    }
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl ValidationReport {
    /// Report from outcome counts alone; every draft not accepted directly
    /// counts as initially rejected.
    pub fn from_counts(direct: usize, regenerated: usize, hitl: usize) -> Self {
        let mut r = ValidationReport {
            total: direct + regenerated + hitl,
            direct_accepts: direct,
            regenerated_accepts: regenerated,
            hitl,
            initially_rejected: regenerated + hitl,
            ..Default::default()
        };
        r.finish();
        r
    }

    pub fn validated(&self) -> usize {
        self.direct_accepts + self.regenerated_accepts
    }

    pub fn finish(&mut self) {
        self.total_violations = self.violations_by_rule.values().sum();
        self.acceptance_rate_pct = pct(self.validated(), self.total);
        self.recovery_rate_pct = pct(self.regenerated_accepts, self.initially_rejected);
    }

    fn tally(&mut self, v: &CriticVerdict) {
        for id in v.rule_ids() {
            *self.violations_by_rule.entry(id).or_default() += 1;
        }
    }

    /// (rule, count, share of all violations in percent), most frequent
    /// first, rules with no violations omitted.
    pub fn violation_rows(&self) -> Vec<(RuleId, usize, f64)> {
        let total: usize = self.violations_by_rule.values().sum();
        let mut rows: Vec<_> = self
            .violations_by_rule
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(r, n)| (*r, *n, pct(*n, total)))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        rows
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticCheckpoint {
    pub processed: usize,
    pub validated_len: u64,
    pub hitl_len: u64,
    pub report: ValidationReport,
}

enum Outcome {
    Direct,
    Regenerated,
    Hitl,
    Failed,
}

fn hitl_with_reason(mut t: GoldenTriplet, reason: String, last: Option<CriticVerdict>, ic: u32) -> GoldenTriplet {
    let (violations, prior) = match last {
        Some(v) if !v.passed => (v.violations, v.critic_rejection_reason),
        _ => (Vec::new(), String::new()),
    };
    let critic_rejection_reason = if prior.is_empty() {
        reason
    } else {
        format!("{reason}; {prior}")
    };
    t.critic_verdict = CriticVerdict {
        passed: false,
        violations,
        critic_rejection_reason,
        iteration_count: ic,
    };
    t.final_status = FinalStatus::HitlPending;
    t
}

/// Run one draft through evaluate / regenerate until it passes or the
/// ceiling is reached.
fn validate_one(
    critic: &Critic<'_>,
    resolver: &dyn ContextResolver,
    draft: Option<DraftTriplet>,
    triplet: GoldenTriplet,
    report: &mut ValidationReport,
) -> (GoldenTriplet, Outcome) {
    let Some(mut draft) = draft else {
        let id = triplet.triplet_id.clone();
        warn!(triplet = %id, "no prescription annotation; routing to review");
        return (
            hitl_with_reason(triplet, "missing prescription annotation".into(), None, 0),
            Outcome::Failed,
        );
    };
    draft.triplet.critic_verdict = CriticVerdict::pending();
    let ctx = match resolver.resolve(&draft.triplet) {
        Ok(c) => c,
        Err(e) => {
            return (
                hitl_with_reason(draft.triplet, format!("rule context unavailable: {e}"), None, 0),
                Outcome::Failed,
            )
        }
    };
    let mut verdict = match critic.judge(&draft, &ctx) {
        Ok(v) => v,
        Err(e) => {
            return (
                hitl_with_reason(draft.triplet, format!("evaluation failed: {e}"), None, 0),
                Outcome::Failed,
            )
        }
    };
    report.tally(&verdict);
    if !verdict.passed {
        report.initially_rejected += 1;
    }
    let max = critic.thresholds.max_regeneration_cycles;
    while !verdict.passed && verdict.iteration_count < max {
        let ic = verdict.iteration_count;
        draft = match critic.regenerate(&draft, &verdict) {
            Ok(d) => d,
            Err(e) => {
                return (
                    hitl_with_reason(draft.triplet, format!("regeneration failed: {e}"), Some(verdict), ic),
                    Outcome::Failed,
                )
            }
        };
        let ic = draft.triplet.critic_verdict.iteration_count;
        verdict = match critic.judge(&draft, &ctx) {
            Ok(v) => v,
            Err(e) => {
                return (
                    hitl_with_reason(draft.triplet, format!("evaluation failed: {e}"), Some(verdict), ic),
                    Outcome::Failed,
                )
            }
        };
        report.tally(&verdict);
    }
    let mut t = draft.triplet;
    let outcome = if verdict.passed {
        t.final_status = FinalStatus::AutoAccepted;
        if verdict.iteration_count == 0 {
            Outcome::Direct
        } else {
            Outcome::Regenerated
        }
    } else {
        t.final_status = FinalStatus::HitlPending;
        Outcome::Hitl
    };
    t.critic_verdict = verdict;
    (t, outcome)
}

/// Validate every draft, appending each to the validated or review file.
///
/// Progress is checkpointed every `checkpoint_interval_triplets` drafts with
/// the committed lengths of both output files; a resumed run cuts off
/// anything written after the last checkpoint and continues from there.
pub fn run_validation(
    opts: &ValidationOptions,
    critic: &Critic<'_>,
    resolver: &dyn ContextResolver,
) -> Result<ValidationReport> {
    let drafts = read_corpus(&opts.drafts_path)?;
    let annotations: HashMap<String, AnnotationRecord> =
        read_jsonl::<AnnotationRecord>(&opts.annotations_path, ReadMode::Strict)?
            .records
            .into_iter()
            .map(|a| (a.triplet_id.clone(), a))
            .collect();

    let mut cp: CriticCheckpoint = checkpoint::load(&opts.checkpoint_path)?.unwrap_or_default();
    if cp.processed > drafts.len() {
        return Err(Error::Integrity {
            path: opts.checkpoint_path.clone(),
            message: format!(
                "checkpoint covers {} drafts but the draft file has {}",
                cp.processed,
                drafts.len()
            ),
        });
    }
    truncate_to(&opts.validated_path, cp.validated_len)?;
    truncate_to(&opts.hitl_path, cp.hitl_len)?;
    if cp.processed > 0 {
        info!(done = cp.processed, "resuming validation");
    }

    let interval = critic.thresholds.checkpoint_interval_triplets;
    for (this_call, triplet) in drafts.iter().skip(cp.processed).enumerate() {
        if opts.stop_after.is_some_and(|n| this_call >= n) {
            return Err(Error::Interrupted {
                stage: Stage::Critic,
                after: cp.processed,
            });
        }
        let draft = annotations.get(&triplet.triplet_id).map(|a| DraftTriplet {
            triplet: triplet.clone(),
            annotation: a.annotation.clone(),
        });
        let (record, outcome) = validate_one(critic, resolver, draft, triplet.clone(), &mut cp.report);
        cp.report.total += 1;
        match outcome {
            Outcome::Direct => cp.report.direct_accepts += 1,
            Outcome::Regenerated => cp.report.regenerated_accepts += 1,
            Outcome::Hitl => cp.report.hitl += 1,
            Outcome::Failed => {
                cp.report.hitl += 1;
                cp.report.routing_errors += 1;
            }
        }
        let target = if record.final_status == FinalStatus::AutoAccepted {
            &opts.validated_path
        } else {
            &opts.hitl_path
        };
        append_corpus(target, &record)?;
        cp.processed += 1;
        if cp.processed.is_multiple_of(interval) {
            cp.validated_len = file_len(&opts.validated_path)?;
            cp.hitl_len = file_len(&opts.hitl_path)?;
            checkpoint::save(&opts.checkpoint_path, &cp)?;
        }
    }
    cp.validated_len = file_len(&opts.validated_path)?;
    cp.hitl_len = file_len(&opts.hitl_path)?;
    cp.report.finish();
    checkpoint::save(&opts.checkpoint_path, &cp)?;
    write_json_atomic(&opts.report_path, &cp.report)?;
    Ok(cp.report)
}

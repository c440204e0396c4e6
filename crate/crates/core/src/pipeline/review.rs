//! Expert review of sampled and pending records.
//!
//! The queue holds every HITLPending record plus a seeded sample of
//! AutoAccepted ones. It is fixed when first built and persisted, so a
//! restart serves the same queue. Each verdict is appended to an audit log
//! before the corpus files are rewritten; reopening the store re-applies any
//! logged verdict the files do not yet reflect.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{append_jsonl, read_corpus, read_json, read_jsonl, write_json_atomic, write_jsonl_atomic, ReadMode};
use crate::error::Error;
use crate::model::{FinalStatus, GoldenTriplet};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accepted,
    Revised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rubric {
    pub physiological_accuracy: u8,
    pub coaching_relevance: u8,
    pub source_fidelity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewVerdict {
    pub triplet_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_output: Option<String>,
    pub rubric: Rubric,
    pub reviewer_id: String,
    pub timestamp: String,
}

impl ReviewVerdict {
    pub fn validate(&self) -> Result<(), String> {
        let r = &self.rubric;
        for (name, v) in [
            ("physiological_accuracy", r.physiological_accuracy),
            ("coaching_relevance", r.coaching_relevance),
            ("source_fidelity", r.source_fidelity),
        ] {
            if !(1..=5).contains(&v) {
                return Err(format!("rubric.{name} must be between 1 and 5, got {v}"));
            }
        }
        let revised = self.revised_output.as_deref().map(str::trim).unwrap_or("");
        match self.decision {
            Decision::Revised if revised.is_empty() => {
                Err("revised_output is required for a Revised decision".into())
            }
            Decision::Accepted if self.revised_output.is_some() => {
                Err("revised_output is only allowed for a Revised decision".into())
            }
            _ if self.reviewer_id.trim().is_empty() => Err("reviewer_id must not be empty".into()),
            _ => Ok(()),
        }
    }

    pub fn target_status(&self) -> FinalStatus {
        match self.decision {
            Decision::Accepted => FinalStatus::HitlAccepted,
            Decision::Revised => FinalStatus::HitlRevised,
        }
    }
}

/// One final_status transition in the audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewLogEntry {
    pub seq: usize,
    pub triplet_id: String,
    pub from: FinalStatus,
    pub to: FinalStatus,
    pub verdict: ReviewVerdict,
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown triplet `{0}`")]
    NotFound(String),
    #[error("`{}` already reviewed", .0.triplet_id)]
    Conflict(Box<ReviewLogEntry>),
    #[error("invalid verdict: {0}")]
    Validation(String),
    #[error(transparent)]
    Store(#[from] Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueFile {
    pub schema_version: String,
    pub seed: u64,
    pub sample_rate: f64,
    pub pending: Vec<String>,
    pub sampled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewProgress {
    pub queue_total: usize,
    pub reviewed: usize,
    pub remaining: usize,
    pub pending_remaining: usize,
    pub sampled_remaining: usize,
    pub accepted: usize,
    pub revised: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewPaths {
    pub validated: PathBuf,
    pub hitl: PathBuf,
    pub queue: PathBuf,
    pub log: PathBuf,
}

impl ReviewPaths {
    pub fn in_dir(dir: &Path) -> Self {
        ReviewPaths {
            validated: dir.join("validated_triplets.jsonl"),
            hitl: dir.join("hitl_triplets.jsonl"),
            queue: dir.join("review_queue.json"),
            log: dir.join("review_log.jsonl"),
        }
    }
}

/// Exactly round(rate * n) distinct indices below `n`, ascending.
pub fn sample_indices(n: usize, rate: f64, seed: u64) -> Vec<usize> {
    let k = ((rate * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Build the queue for a validated/hitl pair of corpora.
pub fn build_queue(validated: &[GoldenTriplet], hitl: &[GoldenTriplet], rate: f64, seed: u64) -> QueueFile {
    let pending = hitl
        .iter()
        .filter(|t| t.final_status == FinalStatus::HitlPending)
        .map(|t| t.triplet_id.clone())
        .collect();
    let auto: Vec<&GoldenTriplet> = validated
        .iter()
        .filter(|t| t.final_status == FinalStatus::AutoAccepted)
        .collect();
    let sampled = sample_indices(auto.len(), rate, seed)
        .into_iter()
        .map(|i| auto[i].triplet_id.clone())
        .collect();
    QueueFile {
        schema_version: SCHEMA_VERSION.into(),
        seed,
        sample_rate: rate,
        pending,
        sampled,
    }
}

/// Apply one logged transition. Reviewed records leave the validated file
/// and are appended to the hitl file.
fn apply_entry(validated: &mut Vec<GoldenTriplet>, hitl: &mut [GoldenTriplet], e: &ReviewLogEntry) -> Option<GoldenTriplet> {
    let update = |t: &mut GoldenTriplet| {
        t.final_status = e.to;
        if let Some(out) = &e.verdict.revised_output {
            t.expected_output = out.clone();
        }
    };
    if let Some(t) = hitl.iter_mut().find(|t| t.triplet_id == e.triplet_id) {
        update(t);
        return None;
    }
    let pos = validated.iter().position(|t| t.triplet_id == e.triplet_id)?;
    let mut t = validated.remove(pos);
    update(&mut t);
    Some(t)
}

/// Replay an audit log over the pre-review corpora.
pub fn replay(
    mut validated: Vec<GoldenTriplet>,
    mut hitl: Vec<GoldenTriplet>,
    log: &[ReviewLogEntry],
) -> (Vec<GoldenTriplet>, Vec<GoldenTriplet>) {
    for e in log {
        if let Some(moved) = apply_entry(&mut validated, &mut hitl, e) {
            hitl.push(moved);
        }
    }
    (validated, hitl)
}

pub struct ReviewStore {
    paths: ReviewPaths,
    validated: Vec<GoldenTriplet>,
    hitl: Vec<GoldenTriplet>,
    queue: QueueFile,
    log: Vec<ReviewLogEntry>,
    reviewed: HashMap<String, usize>,
}

impl ReviewStore {
    /// Open the store, building and persisting the queue on first use.
    pub fn open(paths: ReviewPaths, rate: f64, seed: u64) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("sample rate {rate} outside [0, 1]")));
        }
        if !paths.validated.exists() && !paths.hitl.exists() {
            return Err(Error::Precondition(format!(
                "no validated or hitl corpus at {}",
                paths.validated.display()
            )));
        }
        let mut validated = read_corpus(&paths.validated)?;
        let mut hitl = read_corpus(&paths.hitl)?;
        let log: Vec<ReviewLogEntry> = read_jsonl(&paths.log, ReadMode::Strict)?.records;
        let queue = if paths.queue.exists() {
            read_json(&paths.queue)?
        } else {
            let q = build_queue(&validated, &hitl, rate, seed);
            write_json_atomic(&paths.queue, &q)?;
            q
        };
        let mut repaired = false;
        for e in &log {
            let current = validated
                .iter()
                .chain(hitl.iter())
                .find(|t| t.triplet_id == e.triplet_id)
                .map(|t| t.final_status);
            if current == Some(e.from) {
                if let Some(moved) = apply_entry(&mut validated, &mut hitl, e) {
                    hitl.push(moved);
                }
                repaired = true;
            }
        }
        let reviewed = log.iter().enumerate().map(|(i, e)| (e.triplet_id.clone(), i)).collect();
        let store = ReviewStore {
            paths,
            validated,
            hitl,
            queue,
            log,
            reviewed,
        };
        if repaired {
            store.persist()?;
        }
        Ok(store)
    }

    fn persist(&self) -> Result<(), Error> {
        write_jsonl_atomic(&self.paths.validated, &self.validated)?;
        write_jsonl_atomic(&self.paths.hitl, &self.hitl)
    }

    fn in_queue(&self, id: &str) -> bool {
        self.queue.pending.iter().chain(&self.queue.sampled).any(|q| q == id)
    }

    pub fn record(&self, id: &str) -> Option<&GoldenTriplet> {
        self.validated.iter().chain(self.hitl.iter()).find(|t| t.triplet_id == id)
    }

    /// Unreviewed queue entries, pending records first.
    pub fn remaining(&self) -> Vec<&GoldenTriplet> {
        self.queue
            .pending
            .iter()
            .chain(&self.queue.sampled)
            .filter(|id| !self.reviewed.contains_key(*id))
            .filter_map(|id| self.record(id))
            .collect()
    }

    pub fn page(&self, page: usize, per_page: usize) -> Vec<&GoldenTriplet> {
        self.remaining().into_iter().skip(page * per_page).take(per_page).collect()
    }

    /// A queue item with its review, if any.
    pub fn item(&self, id: &str) -> Result<(&GoldenTriplet, Option<&ReviewLogEntry>), ReviewError> {
        if !self.in_queue(id) {
            return Err(ReviewError::NotFound(id.into()));
        }
        let rec = self.record(id).ok_or_else(|| ReviewError::NotFound(id.into()))?;
        Ok((rec, self.reviewed.get(id).map(|&i| &self.log[i])))
    }

    pub fn apply(&mut self, verdict: ReviewVerdict) -> Result<&GoldenTriplet, ReviewError> {
        let id = verdict.triplet_id.clone();
        if !self.in_queue(&id) || self.record(&id).is_none() {
            return Err(ReviewError::NotFound(id));
        }
        if let Some(&i) = self.reviewed.get(&id) {
            return Err(ReviewError::Conflict(Box::new(self.log[i].clone())));
        }
        verdict.validate().map_err(ReviewError::Validation)?;
        let from = self.record(&id).map(|t| t.final_status).unwrap_or(FinalStatus::HitlPending);
        let entry = ReviewLogEntry {
            seq: self.log.len(),
            triplet_id: id.clone(),
            from,
            to: verdict.target_status(),
            verdict,
        };
        append_jsonl(&self.paths.log, std::slice::from_ref(&entry))?;
        if let Some(moved) = apply_entry(&mut self.validated, &mut self.hitl, &entry) {
            self.hitl.push(moved);
        }
        self.reviewed.insert(id.clone(), self.log.len());
        self.log.push(entry);
        self.persist()?;
        Ok(self.record(&id).expect("record present after apply"))
    }

    pub fn log(&self) -> &[ReviewLogEntry] {
        &self.log
    }

    pub fn progress(&self) -> ReviewProgress {
        let done: HashSet<&String> = self.reviewed.keys().collect();
        let left = |ids: &[String]| ids.iter().filter(|i| !done.contains(i)).count();
        let pending_remaining = left(&self.queue.pending);
        let sampled_remaining = left(&self.queue.sampled);
        let total = self.queue.pending.len() + self.queue.sampled.len();
        ReviewProgress {
            queue_total: total,
            reviewed: self.log.len(),
            remaining: pending_remaining + sampled_remaining,
            pending_remaining,
            sampled_remaining,
            accepted: self.log.iter().filter(|e| e.to == FinalStatus::HitlAccepted).count(),
            revised: self.log.iter().filter(|e| e.to == FinalStatus::HitlRevised).count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CriticVerdict;
    use crate::testutil::sample_triplet;
    use proptest::prelude::*;

    fn corpus(dir: &Path, auto: usize, pending: usize) -> ReviewPaths {
        let paths = ReviewPaths::in_dir(dir);
        let validated: Vec<GoldenTriplet> = (0..auto)
            .map(|i| {
                let mut t = sample_triplet(&format!("A001-T{i:04}"));
                t.final_status = FinalStatus::AutoAccepted;
                t.critic_verdict = CriticVerdict::from_violations(vec![], 0);
                t
            })
            .collect();
        let hitl: Vec<GoldenTriplet> = (0..pending)
            .map(|i| {
                let mut t = sample_triplet(&format!("A002-T{i:04}"));
                t.final_status = FinalStatus::HitlPending;
                t.critic_verdict = CriticVerdict::from_violations(
                    vec![crate::model::Violation {
                        rule_id: crate::model::RuleId::F1,
                        reason: "x".into(),
                    }],
                    3,
                );
                t
            })
            .collect();
        write_jsonl_atomic(&paths.validated, &validated).unwrap();
        write_jsonl_atomic(&paths.hitl, &hitl).unwrap();
        paths
    }

    fn verdict(id: &str, decision: Decision) -> ReviewVerdict {
        ReviewVerdict {
            triplet_id: id.into(),
            decision,
            revised_output: (decision == Decision::Revised).then(|| "Rest today.".to_string()),
            rubric: Rubric {
                physiological_accuracy: 4,
                coaching_relevance: 5,
                source_fidelity: 3,
            },
            reviewer_id: "coach-1".into(),
            timestamp: "2026-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn queue_is_pending_plus_exact_sample() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(corpus(dir.path(), 1000, 50), 0.05, 7).unwrap();
        assert_eq!(store.progress().queue_total, 100);
        assert_eq!(store.remaining()[0].final_status, FinalStatus::HitlPending);
        let again = ReviewStore::open(corpus(tempfile::tempdir().unwrap().path(), 1000, 50), 0.05, 7).unwrap();
        assert_eq!(store.queue, again.queue);
    }

    #[test]
    fn verdicts_transition_once_and_conflict_after() {
        let dir = tempfile::tempdir().unwrap();
        let paths = corpus(dir.path(), 40, 3);
        let mut store = ReviewStore::open(paths.clone(), 0.05, 1).unwrap();
        let before = store.progress().remaining;
        let rec = store.apply(verdict("A002-T0000", Decision::Accepted)).unwrap();
        assert_eq!(rec.final_status, FinalStatus::HitlAccepted);
        assert_eq!(store.progress().remaining, before - 1);
        let err = store.apply(verdict("A002-T0000", Decision::Revised)).unwrap_err();
        match err {
            ReviewError::Conflict(e) => assert_eq!(e.to, FinalStatus::HitlAccepted),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            store.apply(verdict("nope", Decision::Accepted)),
            Err(ReviewError::NotFound(_))
        ));
        let mut bad = verdict("A002-T0001", Decision::Revised);
        bad.revised_output = None;
        assert!(matches!(store.apply(bad), Err(ReviewError::Validation(_))));
        let mut bad = verdict("A002-T0001", Decision::Accepted);
        bad.rubric.source_fidelity = 6;
        assert!(matches!(store.apply(bad), Err(ReviewError::Validation(_))));
        assert_eq!(store.record("A002-T0001").unwrap().final_status, FinalStatus::HitlPending);
        assert_eq!(store.log().len(), 1);
    }

    #[test]
    fn sampled_record_moves_to_hitl_file_and_log_replays() {
        let dir = tempfile::tempdir().unwrap();
        let paths = corpus(dir.path(), 40, 2);
        let pre_v = read_corpus(&paths.validated).unwrap();
        let pre_h = read_corpus(&paths.hitl).unwrap();
        let mut store = ReviewStore::open(paths.clone(), 0.05, 3).unwrap();
        let sampled = store.queue.sampled[0].clone();
        store.apply(verdict(&sampled, Decision::Revised)).unwrap();
        store.apply(verdict("A002-T0001", Decision::Accepted)).unwrap();
        let post_v = read_corpus(&paths.validated).unwrap();
        let post_h = read_corpus(&paths.hitl).unwrap();
        assert_eq!(post_v.len(), 39);
        let moved = post_h.iter().find(|t| t.triplet_id == sampled).unwrap();
        assert_eq!(moved.final_status, FinalStatus::HitlRevised);
        assert_eq!(moved.expected_output, "Rest today.");
        let (rv, rh) = replay(pre_v, pre_h, store.log());
        assert_eq!((rv, rh), (post_v, post_h));

        let reopened = ReviewStore::open(paths, 0.05, 99).unwrap();
        assert_eq!(reopened.progress(), store.progress());
    }

    #[test]
    fn reopen_repairs_files_behind_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let paths = corpus(dir.path(), 10, 2);
        let pre_v = read_corpus(&paths.validated).unwrap();
        let pre_h = read_corpus(&paths.hitl).unwrap();
        let mut store = ReviewStore::open(paths.clone(), 0.0, 0).unwrap();
        store.apply(verdict("A002-T0000", Decision::Revised)).unwrap();
        write_jsonl_atomic(&paths.validated, &pre_v).unwrap();
        write_jsonl_atomic(&paths.hitl, &pre_h).unwrap();
        let reopened = ReviewStore::open(paths.clone(), 0.0, 0).unwrap();
        assert_eq!(
            reopened.record("A002-T0000").unwrap().final_status,
            FinalStatus::HitlRevised
        );
    }

    proptest! {
        #[test]
        fn sample_size_is_exact(n in 0usize..3000, rate in 0.0f64..=1.0, seed in any::<u64>()) {
            let s = sample_indices(n, rate, seed);
            prop_assert_eq!(s.len(), ((rate * n as f64).round() as usize).min(n));
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|&i| i < n));
        }
    }
}

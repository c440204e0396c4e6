//! Corpus statistics and the end-to-end stage summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, ReadMode};
use crate::critic::ValidationReport;
use crate::error::Result;
use crate::model::{
    AnchorType, FinalStatus, GoldenTriplet, Persona, QueryType, RuleId, Stage, StrokeType,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub count: usize,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub rows: Vec<CategoryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub file: PathBuf,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: usize,
    pub malformed: Vec<MalformedLine>,
    pub dimensions: Vec<Dimension>,
    pub final_status: BTreeMap<FinalStatus, usize>,
    /// Violations carried on the records' final verdicts.
    pub violations_by_rule: BTreeMap<RuleId, usize>,
    /// Present when the corpus holds critic output.
    pub validation: Option<ValidationReport>,
}

pub fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 * 100.0 / total as f64
    }
}

fn dimension<T: Copy + Ord + std::fmt::Display>(
    name: &str,
    all: &[T],
    label: impl Fn(T) -> &'static str,
    records: &[GoldenTriplet],
    key: impl Fn(&GoldenTriplet) -> T,
) -> Dimension {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(key(r)).or_default() += 1;
    }
    let mut rows: Vec<(usize, T, usize)> = all
        .iter()
        .enumerate()
        .filter_map(|(i, v)| counts.get(v).map(|n| (i, *v, *n)))
        .collect();
    rows.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    Dimension {
        name: name.to_string(),
        rows: rows
            .into_iter()
            .map(|(_, v, n)| CategoryRow {
                category: label(v).to_string(),
                count: n,
                pct: pct(n, records.len()),
            })
            .collect(),
    }
}

/// Tally records by anchor type, persona, query type and stroke type.
pub fn tally(records: &[GoldenTriplet]) -> Vec<Dimension> {
    vec![
        dimension("Anchor Type", AnchorType::ALL, AnchorType::label, records, |r| r.anchor_type),
        dimension("Persona", Persona::ALL, Persona::label, records, |r| r.persona),
        dimension("Query Type", QueryType::ALL, QueryType::label, records, |r| r.query_type),
        dimension("Stroke Type", StrokeType::ALL, StrokeType::label, records, |r| r.stroke_type),
    ]
}

/// Statistics over one or more corpus files. Malformed lines are counted,
/// reported and excluded.
pub fn corpus_report(files: &[&Path]) -> Result<StatsReport> {
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for f in files {
        let read = read_jsonl::<GoldenTriplet>(f, ReadMode::Tolerant)?;
        records.extend(read.records);
        malformed.extend(read.malformed.into_iter().map(|(line, message)| MalformedLine {
            file: f.to_path_buf(),
            line,
            message,
        }));
    }
    Ok(report_for(&records, malformed))
}

pub fn report_for(records: &[GoldenTriplet], malformed: Vec<MalformedLine>) -> StatsReport {
    let mut final_status = BTreeMap::new();
    let mut violations_by_rule = BTreeMap::new();
    for r in records {
        *final_status.entry(r.final_status).or_default() += 1;
        for id in r.critic_verdict.rule_ids() {
            *violations_by_rule.entry(id).or_default() += 1;
        }
    }
    let validated = records.iter().any(|r| r.final_status != FinalStatus::Draft);
    let validation = validated.then(|| {
        let direct = records
            .iter()
            .filter(|r| r.final_status == FinalStatus::AutoAccepted && r.critic_verdict.iteration_count == 0)
            .count();
        let regenerated = records
            .iter()
            .filter(|r| r.final_status == FinalStatus::AutoAccepted && r.critic_verdict.iteration_count > 0)
            .count();
        let hitl = records.iter().filter(|r| r.final_status.is_human_reviewed_or_pending()).count();
        ValidationReport::from_counts(direct, regenerated, hitl)
    });
    StatsReport {
        total: records.len(),
        malformed,
        dimensions: tally(records),
        final_status,
        violations_by_rule,
        validation,
    }
}

impl StatsReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Records: {}", self.total);
        if !self.malformed.is_empty() {
            let _ = writeln!(s, "Malformed lines excluded: {}", self.malformed.len());
        }
        for d in &self.dimensions {
            let _ = writeln!(s, "\n{}", d.name);
            for r in &d.rows {
                let _ = writeln!(s, "  {:<20} {:>7} {:>6.1}%", r.category, r.count, r.pct);
            }
        }
        if !self.final_status.is_empty() {
            let _ = writeln!(s, "\nFinal status");
            for (k, n) in &self.final_status {
                let _ = writeln!(s, "  {:<20} {:>7}", k.label(), n);
            }
        }
        if !self.violations_by_rule.is_empty() {
            let _ = writeln!(s, "\nViolations on final verdicts");
            for (k, n) in &self.violations_by_rule {
                let _ = writeln!(s, "  {:<4} {:>7}  {}", k.as_str(), n, k.label());
            }
        }
        if let Some(v) = &self.validation {
            let _ = writeln!(
                s,
                "\nAcceptance {:.1}%  Recovery {:.1}%",
                v.acceptance_rate_pct, v.recovery_rate_pct
            );
        }
        s
    }
}

/// Group digits in threes: 181389 -> "181,389".
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Ran,
    AlreadyComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub step: u8,
    pub process: String,
    pub input: String,
    pub output: String,
    pub key_metric: String,
    pub status: StageStatus,
}

/// Counts behind the four-row stage summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub source_files: usize,
    pub chunks: usize,
    pub metadata_fields: usize,
    pub seeds: usize,
    pub anchors: usize,
    pub drafts: usize,
    pub validated: usize,
    pub hitl: usize,
}

pub fn stage_rows(c: &StageCounts, status: [StageStatus; 4]) -> Vec<StageRow> {
    let per_anchor = if c.anchors == 0 {
        0.0
    } else {
        c.drafts as f64 / c.anchors as f64
    };
    let row = |step: u8, stage: Stage, input: String, output: String, key_metric: String| StageRow {
        step,
        process: stage.label().to_string(),
        input,
        output,
        key_metric,
        status: status[step as usize - 1],
    };
    vec![
        row(
            1,
            Stage::Ingest,
            format!("{} source files", thousands(c.source_files)),
            format!("{} chunks", thousands(c.chunks)),
            format!("{} metadata fields per chunk", c.metadata_fields),
        ),
        row(
            2,
            Stage::Architect,
            format!("{} query seeds", thousands(c.seeds)),
            format!("{} Performance Anchors", thousands(c.anchors)),
            format!("{:.1}% conversion rate", pct(c.anchors, c.seeds)),
        ),
        row(
            3,
            Stage::Generator,
            format!("{} anchors", thousands(c.anchors)),
            format!("{} draft triplets", thousands(c.drafts)),
            format!("{per_anchor:.1} triplets per anchor"),
        ),
        row(
            4,
            Stage::Critic,
            format!("{} draft triplets", thousands(c.drafts)),
            format!("{} validated triplets", thousands(c.validated)),
            format!("{:.1}% acceptance rate", pct(c.validated, c.drafts)),
        ),
    ]
}

pub fn render_stage_rows(rows: &[StageRow]) -> String {
    let mut s = format!(
        "{:<4} {:<28} {:<22} {:<26} {}\n",
        "Step", "Agent / Process", "Input", "Output", "Key Metric"
    );
    for r in rows {
        let note = if r.status == StageStatus::AlreadyComplete {
            "  (already complete)"
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "{:<4} {:<28} {:<22} {:<26} {}{note}",
            r.step, r.process, r.input, r.output, r.key_metric
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sample_triplet;

    #[test]
    fn single_record_is_one_full_row_per_dimension() {
        let r = report_for(&[sample_triplet("A000-T001")], vec![]);
        for d in &r.dimensions {
            assert_eq!(d.rows.len(), 1, "{}", d.name);
            assert_eq!(d.rows[0].pct, 100.0);
        }
        assert!(r.validation.is_none());
    }

    #[test]
    fn malformed_lines_are_counted_and_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&sample_triplet("A000-T001")).unwrap();
        std::fs::write(&p, format!("{good}\n{{not json\n{good}\n")).unwrap();
        let r = corpus_report(&[&p]).unwrap();
        assert_eq!(r.total, 2);
        assert_eq!(r.malformed.len(), 1);
        assert_eq!(r.malformed[0].line, 2);
    }

    #[test]
    fn digit_grouping() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(950), "950");
        assert_eq!(thousands(1914), "1,914");
        assert_eq!(thousands(181_389), "181,389");
        assert_eq!(thousands(1_000_000), "1,000,000");
    }

    #[test]
    fn stage_rows_shape() {
        let c = StageCounts {
            source_files: 376,
            chunks: 181_389,
            metadata_fields: 5,
            seeds: 950,
            anchors: 88,
            drafts: 1914,
            validated: 1864,
            hitl: 50,
        };
        let rows = stage_rows(&c, [StageStatus::Ran; 4]);
        let text: Vec<_> = rows
            .iter()
            .map(|r| format!("{} | {} | {} | {}", r.process, r.input, r.output, r.key_metric))
            .collect();
        assert_eq!(
            text,
            [
                "Knowledge Base Construction | 376 source files | 181,389 chunks | 5 metadata fields per chunk",
                "Architect Agent | 950 query seeds | 88 Performance Anchors | 9.3% conversion rate",
                "Generator Agent | 88 anchors | 1,914 draft triplets | 21.8 triplets per anchor",
                "Critic Agent | 1,914 draft triplets | 1,864 validated triplets | 97.4% acceptance rate",
            ]
        );
    }
}

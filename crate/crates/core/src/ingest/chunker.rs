//! Semantic segmentation of prose documents.
//!
//! Segments and the units inside them are byte ranges into the source, so the
//! chunks of a document always concatenate back to its text (modulo the
//! whitespace trimmed at chunk edges).

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use tracing::warn;

use super::{approx_token_count, BudgetKind, Chunk, ChunkMetadata, SourceDocument, SourceKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ChunkingOutcome {
    pub chunks: Vec<Chunk>,
    pub warnings: Vec<String>,
}

static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^#{1,6}\s+\S").unwrap());
static DRILL_TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:Drill\s+\d+\b|\d+\.\s+\S)").unwrap());
static EVENT_TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?i:event)\b").unwrap());

pub(crate) fn budget_for(kind: SourceKind) -> Option<BudgetKind> {
    match kind {
        SourceKind::DrillManual => Some(BudgetKind::Drill),
        SourceKind::PhysiologyHandbook => Some(BudgetKind::Handbook),
        SourceKind::CompetitionResults => Some(BudgetKind::Event),
        SourceKind::TabularPhysiological => None,
    }
}

fn is_all_caps_title(line: &str) -> bool {
    let letters = line.chars().filter(|c| c.is_alphabetic()).count();
    letters >= 3 && line.len() <= 80 && !line.chars().any(|c| c.is_lowercase())
}

/// (byte offset of line start, line without terminator)
fn lines_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut pos = 0;
    for raw in text.split_inclusive('\n') {
        out.push((pos, raw.trim_end_matches(['\n', '\r'])));
        pos += raw.len();
    }
    out
}

/// Offsets where a new semantic segment starts.
fn boundary_starts(text: &str, kind: SourceKind) -> Vec<usize> {
    let lines = lines_with_offsets(text);
    let blank = |i: usize| lines.get(i).is_none_or(|(_, l)| l.trim().is_empty());
    let mut starts = Vec::new();
    for (i, (off, line)) in lines.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let hit = match kind {
            SourceKind::DrillManual => {
                (HEADING.is_match(t) || DRILL_TITLE.is_match(t) || is_all_caps_title(t))
                    && blank(i + 1)
            }
            SourceKind::PhysiologyHandbook => {
                HEADING.is_match(t) || (i >= 2 && blank(i - 1) && blank(i - 2))
            }
            SourceKind::CompetitionResults => HEADING.is_match(t) || EVENT_TITLE.is_match(t),
            SourceKind::TabularPhysiological => false,
        };
        if hit {
            starts.push(*off);
        }
    }
    starts
}

fn tokens(text: &str, r: &Range<usize>) -> usize {
    approx_token_count(text[r.clone()].trim())
}

/// Split `r` into contiguous pieces ending just after each separator match.
fn split_after(text: &str, r: &Range<usize>, sep: &Regex) -> Vec<Range<usize>> {
    let slice = &text[r.clone()];
    let mut out = Vec::new();
    let mut start = r.start;
    for m in sep.find_iter(slice) {
        let end = r.start + m.end();
        if end > start && end < r.end {
            out.push(start..end);
            start = end;
        }
    }
    out.push(start..r.end);
    out
}

static SEPARATORS: LazyLock<[Regex; 4]> = LazyLock::new(|| {
    [
        Regex::new(r"\n[ \t]*\n\s*").unwrap(),
        Regex::new(r"\n").unwrap(),
        Regex::new(r"[.!?]\s+").unwrap(),
        Regex::new(r"\s+").unwrap(),
    ]
});

/// Break an oversized range into units of at most `cap` tokens, preferring
/// paragraph, then line, then sentence, then word boundaries.
fn split_units(text: &str, r: Range<usize>, cap: usize, level: usize, out: &mut Vec<Range<usize>>) {
    if tokens(text, &r) <= cap {
        out.push(r);
        return;
    }
    if level >= SEPARATORS.len() {
        // Hard split on character boundaries.
        let max_chars = cap * 4;
        let mut start = r.start;
        let mut count = 0;
        for (i, _) in text[r.clone()].char_indices() {
            if count == max_chars {
                out.push(start..r.start + i);
                start = r.start + i;
                count = 0;
            }
            count += 1;
        }
        out.push(start..r.end);
        return;
    }
    for piece in split_after(text, &r, &SEPARATORS[level]) {
        split_units(text, piece, cap, level + 1, out);
    }
}

/// Greedy packing of segments into budgeted chunk ranges.
fn pack(text: &str, segments: &[Range<usize>], budget: BudgetKind) -> Vec<Range<usize>> {
    let (min, max) = budget.range();
    // Units are kept well under max - min so that joining one to a buffer that
    // is still short of min can never overshoot max.
    let cap = ((max - min) / 2).max(1);
    let mut out: Vec<Range<usize>> = Vec::new();
    let mut buf: Option<Range<usize>> = None;
    let join = |b: &Option<Range<usize>>, u: &Range<usize>| match b {
        Some(b) => b.start..u.end,
        None => u.clone(),
    };
    for seg in segments {
        if let Some(b) = &buf {
            if tokens(text, b) >= min {
                out.push(b.clone());
                buf = None;
            }
        }
        let whole = join(&buf, seg);
        if tokens(text, &whole) <= max {
            buf = Some(whole);
            continue;
        }
        let mut units = Vec::new();
        split_units(text, seg.clone(), cap, 0, &mut units);
        for u in units {
            let cand = join(&buf, &u);
            if tokens(text, &cand) <= max {
                buf = Some(cand);
            } else {
                out.extend(buf.take());
                buf = Some(u);
            }
        }
    }
    if let Some(last) = buf {
        if tokens(text, &last) < min {
            if let Some(prev) = out.last_mut() {
                let merged = prev.start..last.end;
                if tokens(text, &merged) <= max {
                    *prev = merged;
                    return out;
                }
            }
        }
        out.push(last);
    }
    out
}

/// Segment one prose document into budgeted chunks.
pub fn chunk_document(doc: &SourceDocument, metadata: &ChunkMetadata) -> Result<ChunkingOutcome> {
    let budget = budget_for(doc.kind).ok_or_else(|| {
        Error::Precondition(format!(
            "{} is tabular; use the tabular serializers",
            doc.document_name
        ))
    })?;
    let text = doc.content.as_str();
    if text.trim().is_empty() {
        return Err(Error::Precondition(format!(
            "{} is empty",
            doc.document_name
        )));
    }
    let (min, _) = budget.range();
    let mut warnings = Vec::new();

    #[allow(clippy::single_range_in_vec_init)]
    let ranges = if approx_token_count(text.trim()) < min / 2 {
        vec![0..text.len()]
    } else {
        let mut starts = boundary_starts(text, doc.kind);
        if starts.is_empty() {
            let msg = format!(
                "{}: no boundary markers found, falling back to fixed-budget splitting",
                doc.document_name
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        if starts.first() != Some(&0) {
            starts.insert(0, 0);
        }
        let mut segments: Vec<Range<usize>> = starts
            .windows(2)
            .map(|w| w[0]..w[1])
            .chain(std::iter::once(*starts.last().unwrap()..text.len()))
            .collect();
        segments.retain(|r| !text[r.clone()].trim().is_empty());
        pack(text, &segments, budget)
    };

    let chunks = ranges
        .into_iter()
        .filter(|r| !text[r.clone()].trim().is_empty())
        .enumerate()
        .map(|(i, r)| {
            Chunk::new(
                format!("{}#{:04}", doc.document_name, i),
                text[r].trim().to_string(),
                metadata.clone(),
                budget,
            )
        })
        .collect();
    Ok(ChunkingOutcome { chunks, warnings })
}

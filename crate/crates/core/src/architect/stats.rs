//! Correlation-based anchor detection.

use serde::{Deserialize, Serialize};

use super::QuerySeed;
use crate::ingest::tabular::DataTable;
use crate::model::{
    variables, AnchorType, DataCategory, PerformanceAnchor, StrokeType, ThresholdConfig, TrainingPhase,
};

/// One-pass Pearson correlation. `None` for fewer than two points or zero
/// variance in either series.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &(x, y)) in pairs.iter().enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if pairs.len() < 2 || sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEvidence {
    pub variable_pairs: Vec<(String, String)>,
    pub correlation: f64,
    pub n: usize,
    pub condition: Option<String>,
    pub document: String,
}

/// Rows of `table` in the seed's stratum. `General` matches every row, as
/// does a table without the stratum column.
pub fn stratum_rows(table: &DataTable, stroke: StrokeType, phase: TrainingPhase) -> Vec<usize> {
    let keep = |r: usize, col: &str, want: &str, general: bool| {
        general || table.column(col).is_none() || table.cell(r, col) == Some(want)
    };
    (0..table.rows.len())
        .filter(|&r| {
            keep(r, "stroke_type", stroke.as_str(), stroke == StrokeType::General)
                && keep(r, "training_phase", phase.as_str(), phase == TrainingPhase::General)
        })
        .collect()
}

fn condition(var: &str, values: &[f64], t: &ThresholdConfig) -> Option<String> {
    let n = values.len();
    match var {
        "fatigue_score" => {
            let k = values.iter().filter(|v| **v > t.fatigue_high).count();
            Some(format!("fatigue_score is above {} in {k} of {n} records", t.fatigue_high))
        }
        "stroke_prob" => {
            let k = values.iter().filter(|v| **v < t.stroke_prob_low).count();
            Some(format!("stroke_prob is below {} in {k} of {n} records", t.stroke_prob_low))
        }
        _ => None,
    }
}

pub fn data_category_for(t: AnchorType) -> DataCategory {
    match t {
        AnchorType::LoadPerformance => DataCategory::Performance,
        AnchorType::FatigueKinematic | AnchorType::StrokeEfficiency => DataCategory::Physiological,
    }
}

/// The strongest qualifying (primary, partner) pair in the seed's stratum,
/// as an anchor without an id. Pairs come from the seed's anchor-type
/// family and, when the seed targets variables, must include one of them.
pub fn detect_anchor_statistical(
    seed: &QuerySeed,
    tables: &[DataTable],
    t: &ThresholdConfig,
) -> Option<(PerformanceAnchor, AnchorEvidence)> {
    let mut best: Option<(f64, AnchorEvidence)> = None;
    for table in tables {
        let rows = stratum_rows(table, seed.stroke_type, seed.training_phase);
        if rows.len() < t.min_sample_size {
            continue;
        }
        let vars = table.variables();
        for &a in vars.iter().filter(|v| variables::is_primary(seed.anchor_type, v)) {
            for &b in vars.iter().filter(|v| variables::is_partner(seed.anchor_type, v)) {
                if !seed.target_variables.is_empty()
                    && !seed.target_variables.iter().any(|v| v == a || v == b)
                {
                    continue;
                }
                let pairs: Vec<(f64, f64)> = rows
                    .iter()
                    .filter_map(|&r| Some((table.number(r, a)?, table.number(r, b)?)))
                    .collect();
                if pairs.len() < t.min_sample_size {
                    continue;
                }
                let Some(r) = pearson(&pairs) else { continue };
                if r.abs() < t.min_correlation || best.as_ref().is_some_and(|(s, _)| r.abs() <= *s) {
                    continue;
                }
                let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                best = Some((
                    r.abs(),
                    AnchorEvidence {
                        variable_pairs: vec![(a.to_string(), b.to_string())],
                        correlation: r,
                        n: pairs.len(),
                        condition: condition(a, &xs, t),
                        document: table.document_name.clone(),
                    },
                ));
            }
        }
    }
    let (_, ev) = best?;
    let (a, b) = ev.variable_pairs[0].clone();
    let mut summary = format!(
        "Across {} {} {} records in {}, {a} and {b} show a Pearson correlation of r = {:.3}.",
        ev.n,
        seed.stroke_type,
        seed.training_phase,
        ev.document,
        ev.correlation
    );
    if let Some(c) = &ev.condition {
        summary.push_str(&format!(" In this stratum {c}."));
    }
    let anchor = PerformanceAnchor {
        anchor_id: String::new(),
        anchor_type: seed.anchor_type,
        anchor_variables: vec![a, b],
        data_category: data_category_for(seed.anchor_type),
        stroke_type: seed.stroke_type,
        training_phase: seed.training_phase,
        evidence_summary: summary,
        source_documents: vec![ev.document.clone()],
    };
    Some((anchor, ev))
}

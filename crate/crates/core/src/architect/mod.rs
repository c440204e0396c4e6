//! Anchor discovery.
//!
//! A seed library of (anchor type, stroke, phase, complexity, variables)
//! combinations is walked one seed at a time. Each seed either yields a
//! performance anchor, from a correlation test or from a provider reading a
//! digest of the stratum's data, or is discarded. Anchors are deduplicated
//! on (type, variable set, stroke, phase).

mod stats;

pub use stats::{data_category_for, detect_anchor_statistical, pearson, stratum_rows, AnchorEvidence};

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};
use walkdir::WalkDir;

use crate::checkpoint;
use crate::corpus::write_json_atomic;
use crate::error::{Error, Result};
use crate::ingest::tabular::{serialize_aggregate, DataTable, Stratum};
use crate::ingest::ChunkMetadata;
use crate::model::{
    variables, AnchorKey, AnchorType, ComplexityLevel, PerformanceAnchor, RuleId, Stage,
    StrokeType, ThresholdConfig, TrainingPhase,
};
use crate::prompts::{self, ArchitectInput};
use crate::providers::{
    complete, AgentRole, AnchorDraft, CompletionProvider, CompletionRequest, ProviderError,
    ResponseSchema,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    Factorial,
    RuleSpecific,
    DataTargeted,
}

impl SeedKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedKind::Factorial => "factorial",
            SeedKind::RuleSpecific => "rule_specific",
            SeedKind::DataTargeted => "data_targeted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySeed {
    pub seed_id: String,
    pub seed_kind: SeedKind,
    pub anchor_type: AnchorType,
    pub stroke_type: StrokeType,
    pub training_phase: TrainingPhase,
    pub complexity_level: ComplexityLevel,
    pub target_variables: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub total: usize,
    pub rule_specific: usize,
    /// Process only the first `limit` seeds of the library.
    pub limit: Option<usize>,
}

impl SeedConfig {
    pub fn select<'s>(&self, library: &'s [QuerySeed]) -> &'s [QuerySeed] {
        &library[..self.limit.unwrap_or(library.len()).min(library.len())]
    }
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            total: 950,
            rule_specific: 66,
            limit: None,
        }
    }
}

const STROKES: [StrokeType; 6] = [
    StrokeType::Freestyle,
    StrokeType::Backstroke,
    StrokeType::Breaststroke,
    StrokeType::Butterfly,
    StrokeType::IM,
    StrokeType::General,
];

const PHASES: [TrainingPhase; 5] = [
    TrainingPhase::Base,
    TrainingPhase::Build,
    TrainingPhase::Peak,
    TrainingPhase::Taper,
    TrainingPhase::Recovery,
];

/// Size of the full factorial block.
pub const FACTORIAL_SEEDS: usize = 3 * STROKES.len() * PHASES.len() * 3;

/// Variables each rule reads, with the phase it is specific to.
const RULE_TARGETS: &[(RuleId, &str, Option<TrainingPhase>)] = &[
    (RuleId::F1, "fatigue_score", None),
    (RuleId::F2, "recovery_time_hr", None),
    (RuleId::F3, "adaptation_pct", None),
    (RuleId::I1, "vo2max", None),
    (RuleId::I2, "training_load_au", None),
    (RuleId::I3, "hrv", None),
    (RuleId::P1, "training_load_au", Some(TrainingPhase::Taper)),
    (RuleId::P2, "swimming_speed", Some(TrainingPhase::Base)),
    (RuleId::P3, "recovery_time_hr", Some(TrainingPhase::Recovery)),
    (RuleId::B1, "stroke_prob", None),
    (RuleId::B2, "imu3_acc_z", None),
];

/// Build the seed library: the factorial block, rule-specific seeds, then
/// data-targeted seeds up to `total`.
pub fn build_seed_library(cfg: &SeedConfig) -> Result<Vec<QuerySeed>> {
    if cfg.total < FACTORIAL_SEEDS + cfg.rule_specific {
        return Err(Error::Config(format!(
            "seed total {} is below factorial {FACTORIAL_SEEDS} + rule-specific {}",
            cfg.total, cfg.rule_specific
        )));
    }
    let mut seeds = Vec::with_capacity(cfg.total);
    let mut push = |kind, anchor_type, stroke_type, training_phase, complexity_level, target_variables| {
        seeds.push(QuerySeed {
            seed_id: format!("S{:04}", seeds.len()),
            seed_kind: kind,
            anchor_type,
            stroke_type,
            training_phase,
            complexity_level,
            target_variables,
        })
    };
    for &t in AnchorType::ALL {
        for s in STROKES {
            for p in PHASES {
                for &c in ComplexityLevel::ALL {
                    push(SeedKind::Factorial, t, s, p, c, Vec::new());
                }
            }
        }
    }
    for i in 0..cfg.rule_specific {
        let (_, var, phase) = RULE_TARGETS[i % RULE_TARGETS.len()];
        let round = i / RULE_TARGETS.len();
        push(
            SeedKind::RuleSpecific,
            variables::natural_anchor_type(var),
            STROKES[i % STROKES.len()],
            phase.unwrap_or(PHASES[(i + round) % PHASES.len()]),
            ComplexityLevel::ALL[i % 3],
            vec![var.to_string()],
        );
    }
    let vars = variables::all();
    let strata: Vec<(StrokeType, TrainingPhase)> =
        STROKES.iter().flat_map(|&s| PHASES.map(|p| (s, p))).collect();
    for i in 0..cfg.total - FACTORIAL_SEEDS - cfg.rule_specific {
        let var = &vars[i % vars.len()];
        let (s, p) = strata[i % strata.len()];
        push(
            SeedKind::DataTargeted,
            variables::natural_anchor_type(var),
            s,
            p,
            ComplexityLevel::ALL[i % 3],
            vec![var.clone()],
        );
    }
    Ok(seeds)
}

/// Parse every CSV under `root`. Unparseable files are logged and skipped.
pub fn load_tables(root: &Path) -> Result<Vec<DataTable>> {
    let mut paths: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    let mut tables = Vec::new();
    for p in paths {
        match DataTable::from_csv_path(&p) {
            Ok(t) => tables.push(t),
            Err(e) => warn!(path = %p.display(), error = %e, "table skipped"),
        }
    }
    Ok(tables)
}

/// Aggregate text for the seed's stratum across all tables. Empty when no
/// table has rows in the stratum.
pub fn stratum_digest(seed: &QuerySeed, tables: &[DataTable]) -> Result<String> {
    let mut parts = vec![format!(
        "Stratum: stroke_type={}, training_phase={}.",
        seed.stroke_type, seed.training_phase
    )];
    let (key, value) = if seed.training_phase == TrainingPhase::General {
        (Stratum::StrokeType, seed.stroke_type.as_str())
    } else {
        (Stratum::TrainingPhase, seed.training_phase.as_str())
    };
    for table in tables {
        let rows = stratum_rows(table, seed.stroke_type, seed.training_phase);
        if rows.is_empty() {
            continue;
        }
        let base = ChunkMetadata {
            source_type: "Structured".into(),
            data_category: data_category_for(seed.anchor_type).to_string(),
            stroke_type: seed.stroke_type.to_string(),
            document_name: table.document_name.clone(),
            complexity_level: seed.complexity_level.to_string(),
        };
        for c in serialize_aggregate(table, &rows, key, value, &base)? {
            parts.push(c.text);
        }
    }
    Ok(if parts.len() == 1 { String::new() } else { parts.join("\n\n") })
}

/// Ask the provider for an anchor over the stratum digest. Variables are
/// canonicalised; a proposal naming an unknown variable is discarded.
pub fn identify_anchor_llm(
    seed: &QuerySeed,
    tables: &[DataTable],
    provider: &dyn CompletionProvider,
    format_retries: u32,
) -> Result<Option<PerformanceAnchor>> {
    let digest = stratum_digest(seed, tables)?;
    if digest.is_empty() {
        return Ok(None);
    }
    let input = ArchitectInput {
        seed_id: seed.seed_id.clone(),
        seed_kind: seed.seed_kind.as_str().into(),
        anchor_type: seed.anchor_type,
        stroke_type: seed.stroke_type,
        training_phase: seed.training_phase,
        complexity_level: seed.complexity_level,
        target_variables: seed.target_variables.clone(),
        data_digest: digest,
    };
    let req = CompletionRequest::new(
        AgentRole::Architect,
        ResponseSchema::AnchorDraft,
        prompts::ARCHITECT_SYSTEM,
        prompts::render("Identify one performance anchor in the data below, or none.", &input),
    );
    let Some(p) = complete::<AnchorDraft>(provider, &req, format_retries)?.value.anchor else {
        return Ok(None);
    };
    let mut vars: Vec<String> = Vec::new();
    for v in &p.anchor_variables {
        match variables::canonical(v) {
            Some(c) if !vars.contains(&c) => vars.push(c),
            Some(_) => {}
            None => {
                warn!(seed = %seed.seed_id, variable = %v, "anchor names unknown variable");
                return Ok(None);
            }
        }
    }
    let documents: Vec<String> = tables
        .iter()
        .filter(|t| !stratum_rows(t, seed.stroke_type, seed.training_phase).is_empty())
        .map(|t| t.document_name.clone())
        .collect();
    Ok(Some(PerformanceAnchor {
        anchor_id: String::new(),
        anchor_type: p.anchor_type,
        anchor_variables: vars,
        data_category: p.data_category.unwrap_or(data_category_for(p.anchor_type)),
        stroke_type: p.stroke_type.unwrap_or(seed.stroke_type),
        training_phase: p.training_phase.unwrap_or(seed.training_phase),
        evidence_summary: p.evidence_summary,
        source_documents: documents,
    }))
}

/// Keep the first anchor for each deduplication key.
pub fn dedupe_anchors(anchors: Vec<PerformanceAnchor>) -> Vec<PerformanceAnchor> {
    let mut seen: HashSet<AnchorKey> = HashSet::new();
    anchors.into_iter().filter(|a| seen.insert(a.dedup_key())).collect()
}

pub enum ArchitectMode<'a> {
    Statistical,
    Provider {
        provider: &'a dyn CompletionProvider,
        format_retries: u32,
    },
}

pub struct ArchitectOptions {
    pub anchors_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub stop_after_seeds: Option<usize>,
}

impl ArchitectOptions {
    pub fn in_dir(dir: &Path) -> Self {
        ArchitectOptions {
            anchors_path: dir.join("performance_anchors.json"),
            checkpoint_path: dir.join("architect_checkpoint.json"),
            stop_after_seeds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSeed {
    pub seed_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchitectCheckpoint {
    pub processed: usize,
    pub raw_anchors: usize,
    pub anchors: Vec<PerformanceAnchor>,
    pub skipped: Vec<SkippedSeed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectSummary {
    pub seeds: usize,
    pub raw_anchors: usize,
    pub anchors: usize,
    pub skipped: usize,
    pub conversion_rate: String,
}

pub fn conversion_rate(anchors: usize, seeds: usize) -> String {
    if seeds == 0 {
        return "0.0%".into();
    }
    format!("{:.1}%", anchors as f64 * 100.0 / seeds as f64)
}

/// Walk the seeds, checkpointing after each, and write the deduplicated
/// anchors. A seed whose provider call fails is recorded and skipped.
pub fn run_architect(
    opts: &ArchitectOptions,
    seeds: &[QuerySeed],
    tables: &[DataTable],
    thresholds: &ThresholdConfig,
    mode: &ArchitectMode<'_>,
) -> Result<(Vec<PerformanceAnchor>, ArchitectSummary)> {
    let mut cp: ArchitectCheckpoint = checkpoint::load(&opts.checkpoint_path)?.unwrap_or_default();
    if cp.processed > seeds.len() {
        return Err(Error::Integrity {
            path: opts.checkpoint_path.clone(),
            message: format!("checkpoint covers {} seeds, library has {}", cp.processed, seeds.len()),
        });
    }
    let mut seen: HashSet<AnchorKey> = cp.anchors.iter().map(|a| a.dedup_key()).collect();
    for (newly, seed) in seeds[cp.processed..].iter().enumerate() {
        if opts.stop_after_seeds.is_some_and(|n| newly >= n) {
            return Err(Error::Interrupted {
                stage: Stage::Architect,
                after: cp.processed,
            });
        }
        let found = match mode {
            ArchitectMode::Statistical => Ok(detect_anchor_statistical(seed, tables, thresholds).map(|(a, _)| a)),
            ArchitectMode::Provider {
                provider,
                format_retries,
            } => identify_anchor_llm(seed, tables, *provider, *format_retries),
        };
        match found {
            Ok(Some(mut a)) => {
                cp.raw_anchors += 1;
                if seen.insert(a.dedup_key()) {
                    a.anchor_id = format!("A{:03}", cp.anchors.len() + 1);
                    cp.anchors.push(a);
                }
            }
            Ok(None) => {}
            Err(Error::Provider(e @ (ProviderError::Schema { .. } | ProviderError::Transport { .. }))) => {
                warn!(seed = %seed.seed_id, error = %e, "seed skipped");
                cp.skipped.push(SkippedSeed {
                    seed_id: seed.seed_id.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
        cp.processed += 1;
        checkpoint::save(&opts.checkpoint_path, &cp)?;
    }
    write_json_atomic(&opts.anchors_path, &cp.anchors)?;
    let summary = ArchitectSummary {
        seeds: seeds.len(),
        raw_anchors: cp.raw_anchors,
        anchors: cp.anchors.len(),
        skipped: cp.skipped.len(),
        conversion_rate: conversion_rate(cp.anchors.len(), seeds.len()),
    };
    info!(anchors = summary.anchors, rate = %summary.conversion_rate, "architect complete");
    Ok((cp.anchors, summary))
}

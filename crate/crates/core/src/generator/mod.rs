//! Draft triplet synthesis.
//!
//! Each anchor is expanded into a fixed plan of (persona, query type)
//! combinations. For every plan the grounding window is retrieved with the
//! category filter for that query, the provider writes the question, answer
//! and prescription annotation, and the complexity level is then assigned
//! from the query type and variable count.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::checkpoint;
use crate::corpus::{append_jsonl, file_len, truncate_to};
use crate::error::{Error, Result};
use crate::model::{
    AnnotationRecord, ComplexityLevel, CriticVerdict, DraftTriplet, FinalStatus, GoldenTriplet,
    PerformanceAnchor, Persona, QueryType, Stage,
};
use crate::prompts::{self, GeneratorInput};
use crate::providers::{complete, AgentRole, CompletionProvider, CompletionRequest, ResponseSchema, TripletDraft};
use crate::vecstore::{route_category, Embedder, ScoredChunk, VectorIndex};

pub const SOURCE_SEPARATOR: &str = "— source:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub persona: Persona,
    pub query_type: QueryType,
    pub repeat_index: u32,
}

/// The first `target` plans. The 15 base combinations pair persona `i mod 5`
/// with query type `i mod 3`, so any prefix stays balanced across both;
/// later rounds repeat the same order with a higher repeat index.
pub fn plan_queries(target: usize) -> Vec<QueryPlan> {
    let personas = Persona::ALL;
    let types = QueryType::ALL;
    let base = personas.len() * types.len();
    (0..target)
        .map(|i| {
            let j = i % base;
            QueryPlan {
                persona: personas[j % personas.len()],
                query_type: types[j % types.len()],
                repeat_index: (i / base) as u32,
            }
        })
        .collect()
}

/// High for multimodal queries over three or more variables, Low for simple
/// queries over exactly one, Medium otherwise.
pub fn assign_complexity(query_type: QueryType, anchor_variables: &[String]) -> Result<ComplexityLevel> {
    let n = anchor_variables.len();
    if n == 0 {
        return Err(Error::Precondition("anchor has no variables".into()));
    }
    Ok(match query_type {
        QueryType::Multimodal if n >= 3 => ComplexityLevel::High,
        QueryType::Simple if n == 1 => ComplexityLevel::Low,
        _ => ComplexityLevel::Medium,
    })
}

/// Retrieved texts joined with a source line after each, plus the distinct
/// document names in retrieval order.
pub fn assemble_context(results: &[ScoredChunk]) -> (String, Vec<String>) {
    let mut docs: Vec<String> = Vec::new();
    let parts: Vec<String> = results
        .iter()
        .map(|r| {
            let doc = &r.chunk.metadata.document_name;
            if !docs.contains(doc) {
                docs.push(doc.clone());
            }
            format!("{}\n{SOURCE_SEPARATOR} {doc}", r.chunk.text.trim())
        })
        .collect();
    (parts.join("\n\n"), docs)
}

fn retrieval_text(anchor: &PerformanceAnchor) -> String {
    format!(
        "{} {} {} {}",
        anchor.anchor_variables.join(" "),
        anchor.stroke_type,
        anchor.training_phase,
        anchor.evidence_summary
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub triplets_per_anchor: usize,
    pub retrieval_k: usize,
    pub format_retries: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            triplets_per_anchor: 10,
            retrieval_k: 5,
            format_retries: 2,
        }
    }
}

pub struct Generator<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn Embedder,
    pub provider: &'a dyn CompletionProvider,
    pub config: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Synthesis {
    Draft(DraftTriplet),
    Skipped { triplet_id: String, reason: String },
}

impl Generator<'_> {
    pub fn synthesize(&self, plan: &QueryPlan, anchor: &PerformanceAnchor, ordinal: usize) -> Result<Synthesis> {
        let triplet_id = format!("{}-T{ordinal:03}", anchor.anchor_id);
        let filter = route_category(plan.query_type, anchor);
        let query_vec = self.embedder.embed(&retrieval_text(anchor))?;
        let results = self.index.retrieve(&query_vec, self.config.retrieval_k, &filter);
        if results.is_empty() {
            warn!(triplet = %triplet_id, ?filter, "no grounding context");
            return Ok(Synthesis::Skipped {
                triplet_id,
                reason: "no grounding context".into(),
            });
        }
        let (context, source_documents) = assemble_context(&results);
        let complexity_level = assign_complexity(plan.query_type, &anchor.anchor_variables)?;
        let input = GeneratorInput {
            triplet_id: triplet_id.clone(),
            persona: plan.persona,
            query_type: plan.query_type,
            complexity_level,
            repeat_index: plan.repeat_index,
            anchor: anchor.clone(),
            context: context.clone(),
        };
        let instructions = format!(
            "Write a {} question in the voice of a {} about the anchor below, then answer it using only the context.",
            plan.query_type.label().to_lowercase(),
            plan.persona.label()
        );
        let req = CompletionRequest::new(
            AgentRole::Generator,
            ResponseSchema::TripletDraft,
            prompts::GENERATOR_SYSTEM,
            prompts::render(&instructions, &input),
        );
        let draft = match complete::<TripletDraft>(self.provider, &req, self.config.format_retries) {
            Ok(c) => c.value,
            Err(e @ crate::providers::ProviderError::Schema { .. }) => {
                warn!(triplet = %triplet_id, error = %e, "generator response rejected");
                return Ok(Synthesis::Skipped {
                    triplet_id,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        };
        Ok(Synthesis::Draft(DraftTriplet {
            triplet: GoldenTriplet {
                anchor_id: anchor.anchor_id.clone(),
                triplet_id,
                query: draft.query,
                query_type: plan.query_type,
                persona: plan.persona,
                complexity_level,
                context,
                expected_output: draft.expected_output,
                anchor_type: anchor.anchor_type,
                anchor_variables: anchor.anchor_variables.clone(),
                stroke_type: anchor.stroke_type,
                training_phase: anchor.training_phase,
                data_category: anchor.data_category,
                source_documents,
                critic_verdict: CriticVerdict::pending(),
                final_status: FinalStatus::Draft,
            },
            annotation: draft.annotation,
        }))
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub drafts_path: PathBuf,
    pub annotations_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Stop with `Error::Interrupted` after this many anchors in this call.
    pub stop_after_anchors: Option<usize>,
}

impl GeneratorOptions {
    pub fn in_dir(dir: &std::path::Path) -> Self {
        GeneratorOptions {
            drafts_path: dir.join("golden_triplets.jsonl"),
            annotations_path: dir.join("prescription_annotations.jsonl"),
            checkpoint_path: dir.join("generator_checkpoint.json"),
            stop_after_anchors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPlan {
    pub triplet_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheckpoint {
    pub completed_anchors: Vec<String>,
    pub drafts_len: u64,
    pub annotations_len: u64,
    pub drafts: usize,
    pub skipped: Vec<SkippedPlan>,
    pub by_persona: BTreeMap<Persona, usize>,
    pub by_query_type: BTreeMap<QueryType, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSummary {
    pub anchors: usize,
    pub newly_completed: usize,
    pub drafts: usize,
    pub skipped: Vec<SkippedPlan>,
    pub by_persona: BTreeMap<Persona, usize>,
    pub by_query_type: BTreeMap<QueryType, usize>,
}

/// Generate drafts for every anchor in order, appending each anchor's drafts
/// and annotations as one batch and checkpointing after it.
pub fn run_generator(
    opts: &GeneratorOptions,
    anchors: &[PerformanceAnchor],
    generator: &Generator<'_>,
) -> Result<GeneratorSummary> {
    let mut cp: GeneratorCheckpoint = checkpoint::load(&opts.checkpoint_path)?.unwrap_or_default();
    truncate_to(&opts.drafts_path, cp.drafts_len)?;
    truncate_to(&opts.annotations_path, cp.annotations_len)?;
    let done: HashSet<String> = cp.completed_anchors.iter().cloned().collect();
    let plans = plan_queries(generator.config.triplets_per_anchor);
    let mut newly = 0usize;
    for anchor in anchors {
        if done.contains(&anchor.anchor_id) {
            continue;
        }
        if opts.stop_after_anchors.is_some_and(|n| newly >= n) {
            return Err(Error::Interrupted {
                stage: Stage::Generator,
                after: cp.completed_anchors.len(),
            });
        }
        let mut drafts = Vec::new();
        let mut annotations = Vec::new();
        for (i, plan) in plans.iter().enumerate() {
            match generator.synthesize(plan, anchor, i)? {
                Synthesis::Draft(d) => {
                    *cp.by_persona.entry(plan.persona).or_default() += 1;
                    *cp.by_query_type.entry(plan.query_type).or_default() += 1;
                    annotations.push(AnnotationRecord {
                        triplet_id: d.triplet.triplet_id.clone(),
                        annotation: d.annotation,
                    });
                    drafts.push(d.triplet);
                }
                Synthesis::Skipped { triplet_id, reason } => {
                    cp.skipped.push(SkippedPlan { triplet_id, reason })
                }
            }
        }
        append_jsonl(&opts.drafts_path, &drafts)?;
        append_jsonl(&opts.annotations_path, &annotations)?;
        cp.drafts += drafts.len();
        cp.drafts_len = file_len(&opts.drafts_path)?;
        cp.annotations_len = file_len(&opts.annotations_path)?;
        cp.completed_anchors.push(anchor.anchor_id.clone());
        checkpoint::save(&opts.checkpoint_path, &cp)?;
        newly += 1;
        info!(anchor = %anchor.anchor_id, drafts = drafts.len(), "anchor complete");
    }
    Ok(GeneratorSummary {
        anchors: cp.completed_anchors.len(),
        newly_completed: newly,
        drafts: cp.drafts,
        skipped: cp.skipped,
        by_persona: cp.by_persona,
        by_query_type: cp.by_query_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Chunk, ChunkMetadata};
    use crate::model::{AnchorType, DataCategory, StrokeType, TrainingPhase};
    use crate::providers::{TemplateConfig, TemplateProvider};
    use crate::vecstore::HashingEmbedder;
    use proptest::prelude::*;

    #[test]
    fn complexity_rule_exhaustive() {
        for qt in QueryType::ALL {
            for n in 1..=5 {
                let vars: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
                let expected = if *qt == QueryType::Multimodal && n >= 3 {
                    ComplexityLevel::High
                } else if *qt == QueryType::Simple && n == 1 {
                    ComplexityLevel::Low
                } else {
                    ComplexityLevel::Medium
                };
                assert_eq!(assign_complexity(*qt, &vars).unwrap(), expected, "{qt} x {n}");
            }
        }
        assert!(assign_complexity(QueryType::Simple, &[]).is_err());
    }

    #[test]
    fn plan_shapes() {
        let ten = plan_queries(10);
        let combos: HashSet<_> = ten.iter().map(|p| (p.persona, p.query_type)).collect();
        assert_eq!(combos.len(), 10);
        assert!(ten.iter().all(|p| p.repeat_index == 0));
        let fifteen = plan_queries(15);
        let combos: HashSet<_> = fifteen.iter().map(|p| (p.persona, p.query_type)).collect();
        assert_eq!(combos.len(), 15);
        let p22 = plan_queries(22);
        assert_eq!(p22.iter().filter(|p| p.repeat_index == 1).count(), 7);
        assert_eq!(&p22[15..], &plan_queries(7).iter().map(|p| QueryPlan { repeat_index: 1, ..*p }).collect::<Vec<_>>()[..]);
    }

    proptest! {
        #[test]
        fn prefixes_stay_balanced(target in 1usize..200) {
            let plans = plan_queries(target);
            let mut per: BTreeMap<Persona, usize> = BTreeMap::new();
            for p in &plans {
                *per.entry(p.persona).or_default() += 1;
            }
            let max = per.values().max().copied().unwrap_or(0);
            let min = Persona::ALL.iter().map(|p| per.get(p).copied().unwrap_or(0)).min().unwrap();
            prop_assert!(max - min <= 1);
        }
    }

    fn anchor() -> PerformanceAnchor {
        PerformanceAnchor {
            anchor_id: "A001".into(),
            anchor_type: AnchorType::LoadPerformance,
            anchor_variables: vec!["training_load_au".into()],
            data_category: DataCategory::Performance,
            stroke_type: StrokeType::Freestyle,
            training_phase: TrainingPhase::Build,
            evidence_summary: "training load tracks split time".into(),
            source_documents: vec![],
        }
    }

    fn index(source_type: &str) -> (VectorIndex, HashingEmbedder) {
        let e = HashingEmbedder::new(64, 7);
        let mut idx = VectorIndex::new(64);
        let chunks = (0..3)
            .map(|i| {
                Chunk::new(
                    format!("doc{i}.md#0000"),
                    format!("Build phase training load guidance number {i} for freestyle swimmers holding 4 x 100 m."),
                    ChunkMetadata {
                        source_type: source_type.into(),
                        data_category: "Unstructured".into(),
                        stroke_type: "Freestyle".into(),
                        document_name: format!("doc{i}.md"),
                        complexity_level: "Medium".into(),
                    },
                    crate::ingest::BudgetKind::Handbook,
                )
            })
            .collect();
        idx.index_chunks(chunks, &e).unwrap();
        (idx, e)
    }

    #[test]
    fn draft_is_grounded_in_retrieved_chunks() {
        let (idx, e) = index("Unstructured");
        let p = TemplateProvider::new(TemplateConfig::default());
        let g = Generator {
            index: &idx,
            embedder: &e,
            provider: &p,
            config: GeneratorConfig::default(),
        };
        let plan = QueryPlan {
            persona: Persona::EliteCoach,
            query_type: QueryType::Simple,
            repeat_index: 0,
        };
        let Synthesis::Draft(d) = g.synthesize(&plan, &anchor(), 0).unwrap() else {
            panic!("skipped")
        };
        assert_eq!(d.triplet.triplet_id, "A001-T000");
        assert_eq!(d.triplet.source_documents.len(), 3);
        for i in 0..3 {
            assert!(d.triplet.context.contains(&format!("guidance number {i}")));
            assert!(d.triplet.context.contains(&format!("{SOURCE_SEPARATOR} doc{i}.md")));
        }
        assert_eq!(d.triplet.complexity_level, ComplexityLevel::Low);
        assert_eq!(d.triplet.final_status, FinalStatus::Draft);
    }

    #[test]
    fn empty_filter_match_skips() {
        let (idx, e) = index("Physiological");
        let p = TemplateProvider::new(TemplateConfig::default());
        let g = Generator {
            index: &idx,
            embedder: &e,
            provider: &p,
            config: GeneratorConfig::default(),
        };
        let plan = plan_queries(1)[0];
        match g.synthesize(&plan, &anchor(), 0).unwrap() {
            Synthesis::Skipped { reason, .. } => assert_eq!(reason, "no grounding context"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interrupted_generation_resumes_identically() {
        let (idx, e) = index("Unstructured");
        let p = TemplateProvider::new(TemplateConfig::default());
        let g = Generator {
            index: &idx,
            embedder: &e,
            provider: &p,
            config: GeneratorConfig::default(),
        };
        let anchors: Vec<_> = (1..=4)
            .map(|i| PerformanceAnchor {
                anchor_id: format!("A{i:03}"),
                ..anchor()
            })
            .collect();
        let a = tempfile::tempdir().unwrap();
        let full = GeneratorOptions::in_dir(a.path());
        let s = run_generator(&full, &anchors, &g).unwrap();
        assert_eq!(s.drafts, 40);
        let b = tempfile::tempdir().unwrap();
        let mut cut = GeneratorOptions::in_dir(b.path());
        cut.stop_after_anchors = Some(2);
        assert!(matches!(run_generator(&cut, &anchors, &g), Err(Error::Interrupted { after: 2, .. })));
        cut.stop_after_anchors = None;
        let s2 = run_generator(&cut, &anchors, &g).unwrap();
        assert_eq!(s2.newly_completed, 2);
        assert_eq!(
            std::fs::read(&full.drafts_path).unwrap(),
            std::fs::read(&cut.drafts_path).unwrap()
        );
        let again = run_generator(&cut, &anchors, &g).unwrap();
        assert_eq!(again.newly_completed, 0);
    }
}

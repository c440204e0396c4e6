//! Stage orchestration, run state and reporting.
//!
//! Stages run strictly in order and hand off through files in the output
//! directory. Each stage is itself resumable, so resuming a run means
//! re-entering the first incomplete stage with the stored configuration.

pub mod report;
pub mod review;

pub use report::{corpus_report, report_for, stage_rows, StageCounts, StageRow, StageStatus, StatsReport};
pub use review::{
    Decision, ReviewError, ReviewLogEntry, ReviewPaths, ReviewProgress, ReviewStore, ReviewVerdict, Rubric,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

use crate::architect::{self, ArchitectMode, ArchitectOptions, ArchitectSummary, SeedConfig};
use crate::checkpoint;
use crate::corpus::{read_corpus, read_json, write_json_atomic};
use crate::critic::{run_validation, Critic, L1Mode, TableResolver, ValidationOptions, ValidationReport};
use crate::error::{Error, IoContext, Result};
use crate::generator::{run_generator, Generator, GeneratorConfig, GeneratorOptions, GeneratorSummary};
use crate::ingest::{run_ingest, IngestOptions, IngestSummary};
use crate::model::{PerformanceAnchor, PipelineState, Stage, ThresholdConfig};
use crate::providers::{build_provider, CompletionProvider, ProviderSettings};
use crate::vecstore::{embedder_from_spec, Embedder, EmbeddingProviderSpec, VectorIndex};

pub const STATE_FILE: &str = "pipeline_state.json";
pub const CONFIG_FILE: &str = "pipeline_config.json";
pub const REPORT_FILE: &str = "pipeline_report.json";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleProviders {
    pub architect: ProviderSettings,
    pub generator: ProviderSettings,
    pub critic: ProviderSettings,
    pub regenerator: ProviderSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AnchorDetection {
    /// The architect provider reads a digest of each seed's stratum.
    #[default]
    Provider,
    /// Correlation test over the tabular sources, no provider calls.
    Statistical,
}

/// Everything a run needs. Loadable from one JSON file; every key has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Default `sources`.
    pub source_root: PathBuf,
    /// Default `out`.
    pub output_dir: PathBuf,
    /// Template provider for every role by default.
    pub providers: RoleProviders,
    /// Offline 256-dimensional hashing embedder by default.
    pub embedding: EmbeddingProviderSpec,
    pub thresholds: ThresholdConfig,
    /// 950 seeds, 66 rule-specific.
    pub seeds: SeedConfig,
    pub anchor_detection: AnchorDetection,
    /// Default 10.
    pub triplets_per_anchor: usize,
    /// Extra attempts after a malformed provider response. Default 2.
    pub format_retries: u32,
    pub l1_mode: L1Mode,
    /// Default `127.0.0.1:8787`.
    pub review_bind: String,
    /// Environment variable holding the review API bearer token; none means
    /// no authentication.
    pub review_token_env: Option<String>,
    /// Seed for the review sample. Default 0.
    pub review_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source_root: PathBuf::from("sources"),
            output_dir: PathBuf::from("out"),
            providers: RoleProviders::default(),
            embedding: EmbeddingProviderSpec::default(),
            thresholds: ThresholdConfig::default(),
            seeds: SeedConfig::default(),
            anchor_detection: AnchorDetection::default(),
            triplets_per_anchor: 10,
            format_retries: 2,
            l1_mode: L1Mode::default(),
            review_bind: "127.0.0.1:8787".into(),
            review_token_env: None,
            review_seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        if self.triplets_per_anchor == 0 {
            return Err(Error::Config("triplets_per_anchor must be positive".into()));
        }
        if self.seeds.total < architect::FACTORIAL_SEEDS + self.seeds.rule_specific {
            return Err(Error::Config(format!(
                "seeds.total {} is below the factorial block plus rule-specific seeds",
                self.seeds.total
            )));
        }
        Ok(())
    }

    /// Stable identifier derived from the configuration. The output
    /// directory is excluded so a run can be resumed through any path to it.
    pub fn run_id(&self) -> String {
        let keyed = PipelineConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&keyed).expect("config serializes");
        format!("run-{}", &hex::encode(Sha256::digest(&bytes))[..12])
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Where to stop with `Error::Interrupted`, counted in items processed by
/// the current call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StopPoints {
    pub ingest_after_files: Option<usize>,
    pub architect_after_seeds: Option<usize>,
    pub generator_after_anchors: Option<usize>,
    pub critic_after_triplets: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub run_id: String,
    pub rows: Vec<StageRow>,
    pub counts: StageCounts,
}

impl PipelineReport {
    pub fn render(&self) -> String {
        format!("Run {}\n{}", self.run_id, report::render_stage_rows(&self.rows))
    }
}

pub struct Providers {
    pub architect: Arc<dyn CompletionProvider>,
    pub generator: Arc<dyn CompletionProvider>,
    pub critic: Arc<dyn CompletionProvider>,
    pub regenerator: Arc<dyn CompletionProvider>,
}

impl Providers {
    pub fn from_settings(p: &RoleProviders) -> Result<Self> {
        Ok(Providers {
            architect: build_provider(&p.architect)?,
            generator: build_provider(&p.generator)?,
            critic: build_provider(&p.critic)?,
            regenerator: build_provider(&p.regenerator)?,
        })
    }

    /// One provider for every role.
    pub fn shared(p: Arc<dyn CompletionProvider>) -> Self {
        Providers {
            architect: p.clone(),
            generator: p.clone(),
            critic: p.clone(),
            regenerator: p,
        }
    }
}

/// Routes critic and regenerator requests to their own providers.
struct ByRole<'a> {
    critic: &'a dyn CompletionProvider,
    regenerator: &'a dyn CompletionProvider,
}

impl CompletionProvider for ByRole<'_> {
    fn complete_raw(
        &self,
        req: &crate::providers::CompletionRequest,
    ) -> std::result::Result<String, crate::providers::ProviderError> {
        match req.role {
            crate::providers::AgentRole::Regenerator => self.regenerator.complete_raw(req),
            _ => self.critic.complete_raw(req),
        }
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub providers: Providers,
    pub embedder: Box<dyn Embedder>,
}

impl Pipeline {
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let providers = Providers::from_settings(&config.providers)?;
        Self::with_providers(config, providers)
    }

    pub fn with_providers(config: PipelineConfig, providers: Providers) -> Result<Self> {
        config.validate()?;
        let embedder = embedder_from_spec(&config.embedding)?;
        Ok(Pipeline {
            config,
            providers,
            embedder,
        })
    }

    fn save_state(&self, state: &mut PipelineState) -> Result<()> {
        state.touch();
        checkpoint::save(&self.config.out(STATE_FILE), state)
    }

    /// Load this run's state, creating it on first use.
    fn begin(&self) -> Result<PipelineState> {
        let cfg = &self.config;
        std::fs::create_dir_all(&cfg.output_dir).at(&cfg.output_dir)?;
        let run_id = cfg.run_id();
        let mut state = match checkpoint::load::<PipelineState>(&cfg.out(STATE_FILE))? {
            Some(s) if s.run_id != run_id => {
                return Err(Error::Config(format!(
                    "{} holds run {}; use another output directory",
                    cfg.output_dir.display(),
                    s.run_id
                )))
            }
            Some(s) => s,
            None => {
                write_json_atomic(&cfg.out(CONFIG_FILE), cfg)?;
                PipelineState::new(&run_id)
            }
        };
        self.save_state(&mut state)?;
        Ok(state)
    }

    /// Load state and check that every stage before `stage` has finished.
    fn enter(&self, stage: Stage) -> Result<PipelineState> {
        let state = self.begin()?;
        if (state.stage as u8) < (stage as u8) {
            return Err(Error::Precondition(format!(
                "{} needs {} to finish first",
                stage.label(),
                state.stage.label()
            )));
        }
        Ok(state)
    }

    pub fn ingest(&self, stops: &StopPoints) -> Result<IngestSummary> {
        let cfg = &self.config;
        let mut state = self.enter(Stage::Ingest)?;
        let summary = run_ingest(
            &IngestOptions {
                source_root: cfg.source_root.clone(),
                index_path: cfg.out(INDEX_FILE),
                checkpoint_path: cfg.out("ingest_checkpoint.json"),
                stop_after_files: stops.ingest_after_files,
            },
            self.embedder.as_ref(),
        )?;
        self.advance(&mut state, Stage::Ingest)?;
        Ok(summary)
    }

    pub fn architect(&self, stops: &StopPoints) -> Result<(Vec<PerformanceAnchor>, ArchitectSummary)> {
        let cfg = &self.config;
        let mut state = self.enter(Stage::Architect)?;
        let library = architect::build_seed_library(&cfg.seeds)?;
        let seeds = cfg.seeds.select(&library);
        let tables = architect::load_tables(&cfg.source_root)?;
        let mode = match cfg.anchor_detection {
            AnchorDetection::Statistical => ArchitectMode::Statistical,
            AnchorDetection::Provider => ArchitectMode::Provider {
                provider: self.providers.architect.as_ref(),
                format_retries: cfg.format_retries,
            },
        };
        let mut opts = ArchitectOptions::in_dir(&cfg.output_dir);
        opts.stop_after_seeds = stops.architect_after_seeds;
        let out = architect::run_architect(&opts, seeds, &tables, &cfg.thresholds, &mode)?;
        self.advance(&mut state, Stage::Architect)?;
        Ok(out)
    }

    pub fn generate(&self, stops: &StopPoints) -> Result<GeneratorSummary> {
        let cfg = &self.config;
        let mut state = self.enter(Stage::Generator)?;
        let anchors = read_anchors(&cfg.output_dir)?;
        let index = VectorIndex::load(&cfg.out(INDEX_FILE))?;
        let generator = Generator {
            index: &index,
            embedder: self.embedder.as_ref(),
            provider: self.providers.generator.as_ref(),
            config: GeneratorConfig {
                triplets_per_anchor: cfg.triplets_per_anchor,
                retrieval_k: cfg.thresholds.retrieval_k,
                format_retries: cfg.format_retries,
            },
        };
        let mut opts = GeneratorOptions::in_dir(&cfg.output_dir);
        opts.stop_after_anchors = stops.generator_after_anchors;
        let summary = run_generator(&opts, &anchors, &generator)?;
        self.advance(&mut state, Stage::Generator)?;
        Ok(summary)
    }

    pub fn validate(&self, stops: &StopPoints) -> Result<ValidationReport> {
        let cfg = &self.config;
        let mut state = self.enter(Stage::Critic)?;
        let routed = ByRole {
            critic: self.providers.critic.as_ref(),
            regenerator: self.providers.regenerator.as_ref(),
        };
        let mut critic = Critic::new(cfg.thresholds.clone(), &routed);
        critic.l1_mode = cfg.l1_mode;
        critic.format_retries = cfg.format_retries;
        let resolver = TableResolver::discover(&cfg.source_root, &cfg.thresholds)?;
        let mut opts = ValidationOptions::in_dir(&cfg.output_dir);
        opts.stop_after = stops.critic_after_triplets;
        let report = run_validation(&opts, &critic, &resolver)?;

        state.final_status_counts.clear();
        state.iteration_count = 0;
        for path in [&opts.validated_path, &opts.hitl_path] {
            for t in read_corpus(path)? {
                *state.final_status_counts.entry(t.final_status).or_default() += 1;
                state.iteration_count = state.iteration_count.max(t.critic_verdict.iteration_count);
            }
        }
        self.save_state(&mut state)?;
        self.advance(&mut state, Stage::Critic)?;
        Ok(report)
    }

    /// Run or continue every stage. Finished stages are re-entered, find
    /// their outputs complete and only contribute their counts.
    pub fn run(&self, stops: &StopPoints) -> Result<PipelineReport> {
        let start = self.begin()?.stage;
        let status = |s: Stage| {
            if (s as u8) < (start as u8) {
                StageStatus::AlreadyComplete
            } else {
                StageStatus::Ran
            }
        };
        let ingest = self.ingest(stops)?;
        let (anchors, a_sum) = self.architect(stops)?;
        let g_sum = self.generate(stops)?;
        let v = self.validate(stops)?;

        let index = VectorIndex::load(&self.config.out(INDEX_FILE))?;
        let metadata_fields = if index.chunks().iter().all(|c| c.metadata.is_total()) { 5 } else { 0 };
        let counts = StageCounts {
            source_files: ingest.files_seen,
            chunks: ingest.total_chunks,
            metadata_fields,
            seeds: a_sum.seeds,
            anchors: anchors.len(),
            drafts: g_sum.drafts,
            validated: v.validated(),
            hitl: v.hitl,
        };
        let report = PipelineReport {
            run_id: self.config.run_id(),
            rows: stage_rows(
                &counts,
                [Stage::Ingest, Stage::Architect, Stage::Generator, Stage::Critic].map(status),
            ),
            counts,
        };
        write_json_atomic(&self.config.out(REPORT_FILE), &report)?;
        info!(run = %report.run_id, "pipeline complete");
        Ok(report)
    }

    fn advance(&self, state: &mut PipelineState, finished: Stage) -> Result<()> {
        if state.stage == finished {
            state.stage = finished.next();
            state.processed_ids.clear();
            self.save_state(state)?;
        }
        Ok(())
    }
}

/// The stored configuration and state of the run in `output_dir`.
pub fn load_run(output_dir: &Path, run_id: Option<&str>) -> Result<(PipelineConfig, PipelineState)> {
    let state_path = output_dir.join(STATE_FILE);
    let Some(state) = checkpoint::load::<PipelineState>(&state_path)? else {
        return Err(Error::NoRun);
    };
    if run_id.is_some_and(|id| id != state.run_id) {
        return Err(Error::NoRun);
    }
    let mut cfg: PipelineConfig = read_json(&output_dir.join(CONFIG_FILE))?;
    if cfg.run_id() != state.run_id {
        return Err(Error::Integrity {
            path: output_dir.join(CONFIG_FILE),
            message: format!("config does not match run {}", state.run_id),
        });
    }
    cfg.output_dir = output_dir.to_path_buf();
    Ok((cfg, state))
}

/// Continue the run stored in `output_dir` from its first incomplete stage.
pub fn resume(output_dir: &Path, run_id: Option<&str>) -> Result<PipelineReport> {
    let (cfg, _) = load_run(output_dir, run_id)?;
    Pipeline::from_config(cfg)?.run(&StopPoints::default())
}

/// Anchors written by the architect stage.
pub fn read_anchors(output_dir: &Path) -> Result<Vec<PerformanceAnchor>> {
    read_json(&output_dir.join("performance_anchors.json"))
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use metasynth::critic::L1Mode;
use metasynth::fixtures;
use metasynth::pipeline::{
    self, corpus_report, AnchorDetection, Pipeline, PipelineConfig, PipelineReport, StopPoints,
};
use metasynth::providers::ProviderSettings;
use metasynth_review::ApiState;

#[derive(Parser)]
#[command(name = "metasynth", version, about = "Grounded coaching QA corpus synthesis")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus per-key overrides.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    source_root: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    triplets_per_anchor: Option<usize>,
    #[arg(long, global = true)]
    format_retries: Option<u32>,
    /// Total seed library size.
    #[arg(long, global = true)]
    seeds_total: Option<usize>,
    #[arg(long, global = true)]
    seeds_rule_specific: Option<usize>,
    /// Process only the first N seeds.
    #[arg(long, global = true)]
    seeds_limit: Option<usize>,
    #[arg(long, global = true, value_enum)]
    anchor_detection: Option<Detection>,
    #[arg(long, global = true, value_enum)]
    l1_mode: Option<Contradiction>,
    /// Replay one recorded script for every provider role.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    #[arg(long, global = true)]
    hitl_sample_rate: Option<f64>,
    #[arg(long, global = true)]
    review_bind: Option<String>,
    #[arg(long, global = true)]
    review_token_env: Option<String>,
    #[arg(long, global = true)]
    review_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Detection {
    Provider,
    Statistical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Contradiction {
    Lexicon,
    Provider,
}

/// Stop a stage early, leaving a checkpoint to resume from.
#[derive(Args, Default)]
struct StopArgs {
    #[arg(long, hide = true)]
    stop_after_files: Option<usize>,
    #[arg(long, hide = true)]
    stop_after_seeds: Option<usize>,
    #[arg(long, hide = true)]
    stop_after_anchors: Option<usize>,
    #[arg(long, hide = true)]
    stop_after_triplets: Option<usize>,
}

impl StopArgs {
    fn points(&self) -> StopPoints {
        StopPoints {
            ingest_after_files: self.stop_after_files,
            architect_after_seeds: self.stop_after_seeds,
            generator_after_anchors: self.stop_after_anchors,
            critic_after_triplets: self.stop_after_triplets,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the knowledge base index from the source tree.
    Ingest(StopArgs),
    /// Turn query seeds into performance anchors.
    Architect(StopArgs),
    /// Draft triplets for every anchor.
    Generate(StopArgs),
    /// Validate drafts, regenerating or escalating rejected ones.
    Validate(StopArgs),
    /// Run all four stages.
    Run(StopArgs),
    /// Continue the run stored in the output directory.
    Resume {
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Corpus statistics. Defaults to the output directory's corpus files.
    Report {
        files: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the review API over the output directory.
    ReviewServe,
    /// Write a small synthetic source tree and a matching config file.
    Fixtures {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the effective configuration.
    Config,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.source_root {
            cfg.source_root = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.triplets_per_anchor {
            cfg.triplets_per_anchor = v;
        }
        if let Some(v) = self.format_retries {
            cfg.format_retries = v;
        }
        if let Some(v) = self.seeds_total {
            cfg.seeds.total = v;
        }
        if let Some(v) = self.seeds_rule_specific {
            cfg.seeds.rule_specific = v;
        }
        if let Some(v) = self.seeds_limit {
            cfg.seeds.limit = Some(v);
        }
        if let Some(v) = self.anchor_detection {
            cfg.anchor_detection = match v {
                Detection::Provider => AnchorDetection::Provider,
                Detection::Statistical => AnchorDetection::Statistical,
            };
        }
        if let Some(v) = self.l1_mode {
            cfg.l1_mode = match v {
                Contradiction::Lexicon => L1Mode::Lexicon,
                Contradiction::Provider => L1Mode::Provider,
            };
        }
        if let Some(script) = &self.script {
            let s = ProviderSettings::Scripted { script: script.clone() };
            cfg.providers.architect = s.clone();
            cfg.providers.generator = s.clone();
            cfg.providers.critic = s.clone();
            cfg.providers.regenerator = s;
        }
        if let Some(v) = self.hitl_sample_rate {
            cfg.thresholds.hitl_sample_rate = v;
        }
        if let Some(v) = &self.review_bind {
            cfg.review_bind = v.clone();
        }
        if let Some(v) = &self.review_token_env {
            cfg.review_token_env = Some(v.clone());
        }
        if let Some(v) = self.review_seed {
            cfg.review_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_report(r: &PipelineReport) {
    print!("{}", r.render());
}

fn report(cfg: &PipelineConfig, files: &[PathBuf], json: bool) -> anyhow::Result<()> {
    let files: Vec<PathBuf> = if files.is_empty() {
        ["validated_triplets.jsonl", "hitl_triplets.jsonl"]
            .iter()
            .map(|f| cfg.output_dir.join(f))
            .filter(|p| p.exists())
            .collect()
    } else {
        files.to_vec()
    };
    if files.is_empty() {
        bail!("no corpus files in {}", cfg.output_dir.display());
    }
    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let stats = corpus_report(&refs)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
        return Ok(());
    }
    let stage_report = cfg.output_dir.join(pipeline::REPORT_FILE);
    if stage_report.exists() {
        let r: PipelineReport = serde_json::from_str(&std::fs::read_to_string(&stage_report)?)?;
        print_report(&r);
        println!();
    }
    print!("{}", stats.render());
    for m in &stats.malformed {
        eprintln!("malformed: {}:{}: {}", m.file.display(), m.line, m.message);
    }
    Ok(())
}

async fn review_serve(cfg: PipelineConfig) -> anyhow::Result<()> {
    let token = match &cfg.review_token_env {
        Some(var) => Some(std::env::var(var).with_context(|| format!("review token variable {var} is not set"))?),
        None => None,
    };
    let addr: SocketAddr = cfg
        .review_bind
        .parse()
        .with_context(|| format!("bad review_bind `{}`", cfg.review_bind))?;
    let dir = cfg.output_dir.clone();
    let t = cfg.thresholds.clone();
    let state = tokio::task::spawn_blocking(move || {
        ApiState::open(&dir, t.hitl_sample_rate, cfg.review_seed, token, t.grounding_numeric_rel_tol)
    })
    .await??;
    metasynth_review::serve(addr, Arc::new(state)).await?;
    Ok(())
}

fn write_fixtures(dir: &Path, seed: u64) -> anyhow::Result<()> {
    let src = dir.join("sources");
    let docs = fixtures::write_fixture_tree(&src, seed)?;
    let cfg = fixtures::fixture_config(&src, &dir.join("out"));
    let path = dir.join("metasynth.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg)?)?;
    println!("wrote {} documents under {}", docs.len(), src.display());
    println!("config: {}", path.display());
    Ok(())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Fixtures { dir, seed } => return write_fixtures(&dir, seed),
        Command::Resume { run_id } => {
            let dir = cli.config.output_dir.clone().unwrap_or_else(|| cli.config.resolve_dir());
            let r = tokio::task::spawn_blocking(move || pipeline::resume(&dir, run_id.as_deref())).await??;
            print_report(&r);
            return Ok(());
        }
        _ => {}
    }
    let cfg = cli.config.resolve()?;
    match cli.command {
        Command::Config => println!("{}", serde_json::to_string_pretty(&cfg)?),
        Command::Report { files, json } => report(&cfg, &files, json)?,
        Command::ReviewServe => review_serve(cfg).await?,
        Command::Ingest(stop) => {
            let s = blocking(cfg, move |p| p.ingest(&stop.points())).await?;
            println!(
                "{} files, {} processed, {} skipped, {} chunks ({} remainder)",
                s.files_seen,
                s.processed.len(),
                s.skipped.len(),
                s.total_chunks,
                s.remainder_chunks
            );
        }
        Command::Architect(stop) => {
            let (_, s) = blocking(cfg, move |p| p.architect(&stop.points())).await?;
            println!(
                "{} seeds, {} anchors, {} skipped, {} conversion",
                s.seeds, s.anchors, s.skipped, s.conversion_rate
            );
        }
        Command::Generate(stop) => {
            let s = blocking(cfg, move |p| p.generate(&stop.points())).await?;
            println!("{} drafts", s.drafts);
        }
        Command::Validate(stop) => {
            let v = blocking(cfg, move |p| p.validate(&stop.points())).await?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Run(stop) => {
            let r = blocking(cfg, move |p| p.run(&stop.points())).await?;
            print_report(&r);
        }
        Command::Fixtures { .. } | Command::Resume { .. } => unreachable!(),
    }
    Ok(())
}

impl ConfigArgs {
    /// Output directory from the config file, or the default.
    fn resolve_dir(&self) -> PathBuf {
        self.config
            .as_deref()
            .and_then(|p| PipelineConfig::load(p).ok())
            .unwrap_or_default()
            .output_dir
    }
}

async fn blocking<T: Send + 'static>(
    cfg: PipelineConfig,
    f: impl FnOnce(&Pipeline) -> metasynth::Result<T> + Send + 'static,
) -> anyhow::Result<T> {
    Ok(tokio::task::spawn_blocking(move || {
        let p = Pipeline::from_config(cfg)?;
        f(&p)
    })
    .await??)
}

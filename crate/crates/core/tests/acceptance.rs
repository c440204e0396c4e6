//! Acceptance suite. Each test prints one PASS/FAIL line at its tolerance.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metasynth::architect::{build_seed_library, detect_anchor_statistical, pearson, QuerySeed, SeedConfig, SeedKind};
use metasynth::corpus::{read_corpus, write_jsonl_atomic};
use metasynth::critic::{
    evaluate, AthleteContext, ChannelBaseline, KinematicContext, PopulationStats, RuleContext,
};
use metasynth::critic::{check_grounding, run_validation, Critic, FixedResolver, ReferenceKind, ValidationOptions, ValidationReport};
use metasynth::error::Error;
use metasynth::fixtures::{fixture_config, write_fixture_tree};
use metasynth::generator::assign_complexity;
use metasynth::ingest::{run_ingest, Chunk, ChunkMetadata, DataTable, IngestOptions};
use metasynth::model::{
    AnchorType, AnnotationRecord, AthleteStateRecord, ComplexityLevel, CriticVerdict, DataCategory, DraftTriplet,
    FinalStatus, GoldenTriplet, IntensityZone, KinematicFrame, Persona, PrescriptionAnnotation, QueryType, RuleId,
    StrokeType, ThresholdConfig, TrainingPhase, VolumeClass,
};
use metasynth::pipeline::{self, corpus_report, Pipeline, PipelineConfig, Providers, StopPoints};
use metasynth::prompts;
use metasynth::providers::{
    AgentRole, CompletionProvider, CompletionRequest, ProviderError, ProviderSettings, RecordingProvider,
    TemplateConfig, TemplateProvider,
};
use metasynth::vecstore::{HashingEmbedder, MetadataField, MetadataFilter, VectorIndex};

fn line(n: u8, name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("[{}] acceptance {n:>2}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn secs(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// Complexity assignment

#[test]
fn complexity_rule_is_exhaustively_correct() {
    let t = Instant::now();
    let vars = ["fatigue_score", "hrv", "vo2max", "stroke_prob", "imu3_acc_z"];
    let mut wrong = Vec::new();
    let mut cases = 0;
    for qt in [QueryType::Simple, QueryType::Reasoning, QueryType::Multimodal] {
        for n in 1..=5 {
            cases += 1;
            let v: Vec<String> = vars[..n].iter().map(|s| s.to_string()).collect();
            // Hand-written truth table.
            let expected = match (qt, n) {
                (QueryType::Multimodal, 3..=5) => ComplexityLevel::High,
                (QueryType::Simple, 1) => ComplexityLevel::Low,
                _ => ComplexityLevel::Medium,
            };
            let got = assign_complexity(qt, &v).unwrap();
            if got != expected {
                wrong.push(format!("{qt}/{n}: {got} != {expected}"));
            }
        }
    }
    let el = t.elapsed();
    let pass = cases == 15 && wrong.is_empty() && el < Duration::from_secs(1);
    line(1, "complexity rule", pass, format!("{}/{cases} cases match, {}", cases - wrong.len(), secs(el)));
    assert!(pass, "{wrong:?}");
}

// ---------------------------------------------------------------------------
// Rule fixtures

const CONTEXT: &str = "Athlete profile for a senior Freestyle swimmer in the current block. \
    The Catch-Up Drill develops front-quadrant timing and suits every phase.";
const PLAIN_ANSWER: &str = "Keep the session smooth and focus on a long, relaxed stroke.";
const HARD_ANSWER: &str = "Build the main set around race pace efforts with full recovery between repeats.";

fn athlete() -> AthleteContext {
    AthleteContext {
        athlete: AthleteStateRecord {
            fatigue_score: Some(5.0),
            recovery_time_hr: Some(24.0),
            adaptation_pct: Some(3.0),
            training_load_au: Some(500.0),
            vo2max: Some(60.0),
            hrv: Some(70.0),
            hrv_baseline: Some(70.0),
            stroke_prob: Some(0.9),
            hydration_level: Some(60.0),
            biomechanical_efficiency: Some(0.8),
        },
        kinematics: KinematicContext {
            frames: Vec::new(),
            baselines: (1..=10u8).map(|s| (s, ChannelBaseline { mean: 10.0, std: 1.0 })).collect(),
        },
        population: PopulationStats {
            vo2max_tertiles: Some((50.0, 58.0)),
            adaptation_elevated_at: Some(5.0),
        },
    }
}

/// Frames for one sensor whose acceleration magnitude is `mag`.
fn frames(sensor: u8, mag: f64) -> Vec<KinematicFrame> {
    (0..5)
        .map(|i| KinematicFrame {
            sensor_id: sensor,
            acc: [0.0, 0.0, mag],
            gyro: [0.0; 3],
            timestamp: i as f64 * 0.01,
            stroke_type: StrokeType::Freestyle,
        })
        .collect()
}

fn triplet(id: &str, phase: TrainingPhase, answer: &str) -> GoldenTriplet {
    GoldenTriplet {
        anchor_id: "A900".into(),
        triplet_id: id.into(),
        query: "How should this swimmer's next session be structured?".into(),
        query_type: QueryType::Reasoning,
        persona: Persona::EliteCoach,
        complexity_level: ComplexityLevel::Medium,
        context: CONTEXT.into(),
        expected_output: answer.into(),
        anchor_type: AnchorType::FatigueKinematic,
        anchor_variables: vec!["fatigue_score".into(), "imu3_acc_z".into()],
        stroke_type: StrokeType::Freestyle,
        training_phase: phase,
        data_category: DataCategory::Physiological,
        source_documents: vec!["athletes.csv".into()],
        critic_verdict: CriticVerdict::pending(),
        final_status: FinalStatus::Draft,
    }
}

struct Fixture {
    name: &'static str,
    draft: DraftTriplet,
    ctx: AthleteContext,
    expected: Vec<RuleId>,
}

fn fixture(
    name: &'static str,
    phase: TrainingPhase,
    zone: IntensityZone,
    volume: VolumeClass,
    answer: &str,
    tweak: impl FnOnce(&mut PrescriptionAnnotation, &mut AthleteContext),
    expected: &[RuleId],
) -> Fixture {
    let mut annotation = PrescriptionAnnotation::for_zone(zone, volume);
    let mut ctx = athlete();
    tweak(&mut annotation, &mut ctx);
    Fixture {
        name,
        draft: DraftTriplet {
            triplet: triplet(name, phase, answer),
            annotation,
        },
        ctx,
        expected: expected.to_vec(),
    }
}

fn drill(a: &mut PrescriptionAnnotation, sensor: u8) {
    a.prescribes_drill = true;
    a.drill_names = vec!["Catch-Up Drill".into()];
    a.targeted_segments = vec![sensor];
}

fn golden_set() -> Vec<Fixture> {
    use IntensityZone as Z;
    use TrainingPhase as P;
    use VolumeClass as V;
    let drill_answer = "Add the Catch-Up Drill to the warm-up to rebuild front-quadrant timing.";
    vec![
        fixture("clean", P::Build, Z::EasyAerobic, V::Moderate, PLAIN_ANSWER, |_, _| {}, &[]),
        fixture("F1", P::Peak, Z::RacePace, V::Low, HARD_ANSWER, |_, c| c.athlete.fatigue_score = Some(8.0), &[RuleId::F1]),
        fixture("F2", P::Build, Z::EasyAerobic, V::Moderate, PLAIN_ANSWER, |a, _| a.session_start_offset_hr = Some(12.0), &[RuleId::F2]),
        fixture(
            "F3",
            P::Build,
            Z::Recovery,
            V::Low,
            "Take a full day away from the pool and let the body absorb the block.",
            |a, c| {
                a.prescribes_rest_only = true;
                c.athlete.fatigue_score = Some(8.0);
                c.athlete.adaptation_pct = Some(6.0);
            },
            &[RuleId::F3],
        ),
        fixture("I1", P::Build, Z::VO2max, V::Low, HARD_ANSWER, |_, c| c.athlete.vo2max = Some(45.0), &[RuleId::I1]),
        fixture("I2", P::Build, Z::EasyAerobic, V::Moderate, PLAIN_ANSWER, |_, c| c.athlete.training_load_au = Some(900.0), &[RuleId::I2]),
        fixture("I3", P::Peak, Z::RacePace, V::Low, HARD_ANSWER, |_, c| c.athlete.hrv = Some(59.0), &[RuleId::I3]),
        fixture("P1", P::Taper, Z::EasyAerobic, V::High, PLAIN_ANSWER, |_, _| {}, &[RuleId::P1]),
        fixture("P2", P::Base, Z::RacePace, V::Low, HARD_ANSWER, |_, _| {}, &[RuleId::P2]),
        fixture("P3", P::Recovery, Z::Threshold, V::Low, PLAIN_ANSWER, |_, _| {}, &[RuleId::P3]),
        fixture(
            "B1",
            P::Build,
            Z::EasyAerobic,
            V::Moderate,
            drill_answer,
            |a, c| {
                drill(a, 3);
                c.athlete.stroke_prob = Some(0.5);
                c.kinematics.frames = frames(3, 14.0);
            },
            &[RuleId::B1],
        ),
        fixture(
            "B2",
            P::Build,
            Z::EasyAerobic,
            V::Moderate,
            drill_answer,
            |a, c| {
                drill(a, 3);
                c.kinematics.frames = frames(3, 10.5);
            },
            &[RuleId::B2],
        ),
        fixture(
            "L1",
            P::Build,
            Z::EasyAerobic,
            V::Moderate,
            "Increase volume across the week. Keep total volume low so the swimmer stays fresh.",
            |_, _| {},
            &[RuleId::L1],
        ),
        fixture(
            "L2",
            P::Build,
            Z::EasyAerobic,
            V::Moderate,
            "Hold the aerobic set until VO2max reaches 71.3 ml/kg/min.",
            |_, _| {},
            &[RuleId::L2],
        ),
        fixture("F1+P2", P::Base, Z::RacePace, V::Low, HARD_ANSWER, |_, c| c.athlete.fatigue_score = Some(8.0), &[RuleId::F1, RuleId::P2]),
    ]
}

#[test]
fn golden_rule_fixtures_trigger_exactly_their_rules() {
    let t = Instant::now();
    let th = ThresholdConfig::default();
    let set = golden_set();
    let mut failures = Vec::new();
    let mut covered = BTreeSet::new();
    for f in &set {
        let rc = RuleContext::assemble(&f.draft, &f.ctx, &th);
        let v = evaluate(&f.draft, &rc).unwrap();
        if v.rule_ids() != f.expected {
            failures.push(format!("{}: got {:?}, expected {:?}", f.name, v.rule_ids(), f.expected));
        }
        if f.expected.len() == 1 {
            covered.insert(f.expected[0]);
        }
        assert_eq!(v.passed, f.expected.is_empty());
    }
    let el = t.elapsed();
    let rule_fixtures = set.iter().filter(|f| !f.expected.is_empty()).count();
    let pass = failures.is_empty() && covered.len() == RuleId::ALL.len() && el < Duration::from_secs(1);
    line(
        2,
        "critic golden set",
        pass,
        format!(
            "{}/{} violating fixtures exact ({} single-rule ids + 1 dual), clean control passes, {}",
            rule_fixtures - failures.len(),
            rule_fixtures,
            covered.len(),
            secs(el)
        ),
    );
    assert!(pass, "{failures:#?}");
}

#[test]
fn threshold_boundaries_sit_on_the_passing_side() {
    let th = ThresholdConfig::default();
    let judge = |f: &Fixture| {
        let rc = RuleContext::assemble(&f.draft, &f.ctx, &th);
        evaluate(&f.draft, &rc).unwrap().rule_ids()
    };
    let hard = |c: &dyn Fn(&mut AthleteContext)| {
        let mut f = fixture("b", TrainingPhase::Peak, IntensityZone::RacePace, VolumeClass::Low, HARD_ANSWER, |_, _| {}, &[]);
        c(&mut f.ctx);
        f
    };
    let drilled = |p: f64| {
        fixture(
            "b",
            TrainingPhase::Build,
            IntensityZone::EasyAerobic,
            VolumeClass::Moderate,
            "Add the Catch-Up Drill to the warm-up.",
            |a, c| {
                drill(a, 3);
                c.athlete.stroke_prob = Some(p);
                c.kinematics.frames = frames(3, 14.0);
            },
            &[],
        )
    };
    let cases: Vec<(&str, Vec<RuleId>, Vec<RuleId>)> = vec![
        ("fatigue 7.0", judge(&hard(&|c| c.athlete.fatigue_score = Some(7.0))), vec![]),
        ("fatigue 7.01", judge(&hard(&|c| c.athlete.fatigue_score = Some(7.01))), vec![RuleId::F1]),
        ("stroke_prob 0.6", judge(&drilled(0.6)), vec![]),
        ("stroke_prob 0.599", judge(&drilled(0.599)), vec![RuleId::B1]),
        ("hrv -15%", judge(&hard(&|c| c.athlete.hrv = Some(59.5))), vec![]),
        ("hrv -15.1%", judge(&hard(&|c| c.athlete.hrv = Some(59.43))), vec![RuleId::I3]),
    ];
    let bad: Vec<_> = cases.iter().filter(|(_, got, want)| got != want).collect();
    let pass = bad.is_empty();
    line(
        3,
        "threshold boundaries",
        pass,
        format!("{}/{} boundary and just-past cases as expected", cases.len() - bad.len(), cases.len()),
    );
    assert!(pass, "{bad:?}");
}

// ---------------------------------------------------------------------------
// Seed library

#[test]
fn default_seed_library_shape() {
    let t = Instant::now();
    let lib = build_seed_library(&SeedConfig::default()).unwrap();
    let factorial: Vec<&QuerySeed> = lib.iter().filter(|s| s.seed_kind == SeedKind::Factorial).collect();
    let cells: BTreeSet<_> = factorial
        .iter()
        .map(|s| (s.anchor_type, s.stroke_type, s.training_phase, s.complexity_level))
        .collect();
    let mut product = BTreeSet::new();
    for a in AnchorType::ALL {
        for s in StrokeType::ALL {
            for p in [TrainingPhase::Base, TrainingPhase::Build, TrainingPhase::Peak, TrainingPhase::Taper, TrainingPhase::Recovery] {
                for c in ComplexityLevel::ALL {
                    product.insert((*a, *s, p, *c));
                }
            }
        }
    }
    let el = t.elapsed();
    let pass = lib.len() == 950
        && factorial.len() == 270
        && product.len() == 270
        && cells == product
        && el < Duration::from_secs(1);
    line(
        4,
        "seed library",
        pass,
        format!(
            "{} seeds, {} factorial covering {}/{} cells once, {}",
            lib.len(),
            factorial.len(),
            cells.len(),
            product.len(),
            secs(el)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Reported arithmetic

/// (category, count, printed percentage) per dimension.
type Rows = &'static [(&'static str, usize, f64)];

const TABLE: &[(&str, Rows)] = &[
    (
        "Anchor Type",
        &[("Load-Performance", 771, 40.3), ("Stroke-Efficiency", 623, 32.6), ("Fatigue-Kinematic", 520, 27.2)],
    ),
    (
        "Persona",
        &[
            ("Elite Coach", 412, 21.5),
            ("Novice Swimmer", 408, 21.3),
            ("Biometric Analyst", 371, 19.4),
            ("Sports Scientist", 365, 19.1),
            ("Physiotherapist", 358, 18.7),
        ],
    ),
    ("Query Type", &[("Reasoning", 703, 36.7), ("Simple", 606, 31.7), ("Multimodal", 605, 31.6)]),
    (
        "Stroke Type",
        &[
            ("Freestyle", 503, 26.3),
            ("General", 402, 21.0),
            ("Butterfly", 327, 17.1),
            ("Breaststroke", 311, 16.2),
            ("Backstroke", 292, 15.2),
            ("IM", 79, 4.1),
        ],
    ),
];

/// 1,914 records whose marginals match the table, with dimensions assigned
/// independently by cycling through each category list.
fn table_corpus() -> Vec<GoldenTriplet> {
    fn expand<T: Copy>(items: &[(T, usize)]) -> Vec<T> {
        items.iter().flat_map(|(v, n)| std::iter::repeat_n(*v, *n)).collect()
    }
    let anchors = expand(&[
        (AnchorType::LoadPerformance, 771),
        (AnchorType::StrokeEfficiency, 623),
        (AnchorType::FatigueKinematic, 520),
    ]);
    let personas = expand(&[
        (Persona::EliteCoach, 412),
        (Persona::NoviceSwimmer, 408),
        (Persona::BiometricAnalyst, 371),
        (Persona::SportsScientist, 365),
        (Persona::Physiotherapist, 358),
    ]);
    let queries = expand(&[(QueryType::Reasoning, 703), (QueryType::Simple, 606), (QueryType::Multimodal, 605)]);
    let strokes = expand(&[
        (StrokeType::Freestyle, 503),
        (StrokeType::General, 402),
        (StrokeType::Butterfly, 327),
        (StrokeType::Breaststroke, 311),
        (StrokeType::Backstroke, 292),
        (StrokeType::IM, 79),
    ]);
    fn shuffled<T>(mut v: Vec<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
        for i in (1..v.len()).rev() {
            v.swap(i, rng.random_range(0..=i));
        }
        v
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let anchors = shuffled(anchors, &mut rng);
    let personas = shuffled(personas, &mut rng);
    let queries = shuffled(queries, &mut rng);
    let strokes = shuffled(strokes, &mut rng);
    (0..1914)
        .map(|i| {
            let mut t = triplet(&format!("A{:03}-T{i:04}", i % 88), TrainingPhase::Build, PLAIN_ANSWER);
            t.anchor_type = anchors[i];
            t.persona = personas[i];
            t.query_type = queries[i];
            t.stroke_type = strokes[i];
            t
        })
        .collect()
}

#[test]
fn reported_arithmetic_reproduces() {
    let v = ValidationReport::from_counts(1675, 189, 50);
    let rates_ok = (v.acceptance_rate_pct - 97.4).abs() <= 0.05
        && (v.recovery_rate_pct - 79.1).abs() <= 0.05
        && v.total == 1914
        && v.initially_rejected == 239;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.jsonl");
    write_jsonl_atomic(&path, &table_corpus()).unwrap();
    let report = corpus_report(&[&path]).unwrap();
    assert_eq!(report.total, 1914);

    let mut rows = 0;
    let mut count_errors = Vec::new();
    let mut printed_mismatch = Vec::new();
    for (dim, cats) in TABLE {
        let d = report.dimensions.iter().find(|d| d.name == *dim).unwrap();
        assert_eq!(d.rows.len(), cats.len(), "{dim}");
        for (i, (label, n, printed)) in cats.iter().enumerate() {
            rows += 1;
            let r = &d.rows[i];
            let oracle = *n as f64 * 100.0 / 1914.0;
            if r.category != *label || r.count != *n || (r.pct - oracle).abs() > 1e-9 {
                count_errors.push(format!("{dim}/{label}: {r:?}"));
            }
            if (r.pct - printed).abs() > 0.05 {
                printed_mismatch.push(format!("{label} {:.3} vs printed {printed}", r.pct));
            }
        }
    }
    let pass = rates_ok && count_errors.is_empty() && printed_mismatch.is_empty();
    line(
        5,
        "reported arithmetic",
        pass,
        format!(
            "acceptance {:.2}%, recovery {:.2}%; {}/{rows} distribution rows within 0.05 of printed{}",
            v.acceptance_rate_pct,
            v.recovery_rate_pct,
            rows - printed_mismatch.len(),
            if printed_mismatch.is_empty() { String::new() } else { format!(" (off: {})", printed_mismatch.join("; ")) }
        ),
    );
    // The two printed percentages that no rounding of count/1,914 yields are
    // reported above and asserted strictly in the ignored test below.
    assert!(rates_ok, "{v:?}");
    assert!(count_errors.is_empty(), "{count_errors:#?}");
    let known: BTreeSet<&str> = ["Stroke-Efficiency", "Backstroke"].into();
    for m in &printed_mismatch {
        assert!(known.iter().any(|k| m.starts_with(k)), "unexpected mismatch {m}");
    }
    let elite = report.dimensions[1].rows.iter().find(|r| r.category == "Elite Coach").unwrap();
    assert_eq!(format!("{:.1}", elite.pct), "21.5");
}

#[test]
#[ignore = "two printed percentages are inconsistent with their own counts"]
fn printed_distribution_percentages_strict() {
    for (_, cats) in TABLE {
        for (label, n, printed) in *cats {
            let pct = *n as f64 * 100.0 / 1914.0;
            assert!((pct - printed).abs() <= 0.05, "{label}: {pct:.3} vs {printed}");
        }
    }
}

// ---------------------------------------------------------------------------
// Chunk budgets and aggregate statistics

fn number_after<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let i = text.find(key)? + key.len();
    let rest = &text[i..];
    let end = rest.find([',', ' ']).unwrap_or(rest.len());
    Some(rest[..end].trim_end_matches('.'))
}

struct ColumnClaim {
    column: String,
    n: usize,
    mean: f64,
    std: Option<f64>,
    min: f64,
    max: f64,
}

fn claims(text: &str) -> Vec<ColumnClaim> {
    text.split("Column ")
        .skip(1)
        .map(|part| {
            let column = part.split_whitespace().next().unwrap().to_string();
            let n = number_after(part, " over ").unwrap().parse().unwrap();
            let num = |k: &str| number_after(part, k).unwrap().parse::<f64>().unwrap();
            let std = number_after(part, "standard deviation ").and_then(|s| s.parse().ok());
            ColumnClaim {
                column,
                n,
                mean: num("mean "),
                std,
                min: num("minimum "),
                max: num("maximum "),
            }
        })
        .collect()
}

/// Independent reading of a CSV with the csv crate.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (headers, rows)
}

fn type7_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn chunk_budgets_and_aggregate_statistics() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    write_fixture_tree(&src, 5).unwrap();
    let index_path = dir.path().join("index.json");
    let opts = IngestOptions {
        source_root: src.clone(),
        index_path: index_path.clone(),
        checkpoint_path: dir.path().join("cp.json"),
        stop_after_files: None,
    };
    let embedder = HashingEmbedder::new(64, 0);
    run_ingest(&opts, &embedder).unwrap();
    let index = VectorIndex::load(&index_path).unwrap();

    let full: Vec<&Chunk> = index.chunks().iter().filter(|c| !c.remainder).collect();
    let over: Vec<String> = full
        .iter()
        .filter(|c| !c.budget.admits(c.token_count))
        .map(|c| format!("{} {:?} {}", c.chunk_id, c.budget, c.token_count))
        .collect();
    let kinds: BTreeSet<String> = full.iter().map(|c| format!("{:?}", c.budget)).collect();

    // Recompute every aggregate claim from the raw CSV.
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    for rel in ["data/athletes.csv", "data/training_sessions.csv", "data/imu/kinematics.csv"] {
        let (headers, rows) = read_csv(&src.join(rel));
        let doc = Path::new(rel).file_name().unwrap().to_str().unwrap();
        let col = |name: &str| headers.iter().position(|h| h == name);
        for c in index.chunks().iter().filter(|c| c.chunk_id.starts_with(&format!("{doc}#agg-"))) {
            let stem = c.chunk_id.split_once("#agg-").unwrap().1;
            let stem = stem.rsplit_once("-p").filter(|(_, p)| p.parse::<u32>().is_ok()).map_or(stem, |(s, _)| s);
            let (key, value) = ["stroke_type", "training_phase", "performance_tier"]
                .iter()
                .find_map(|k| stem.strip_prefix(&format!("{k}-")).map(|v| (*k, v)))
                .unwrap();
            let members: Vec<&Vec<String>> = if key == "performance_tier" {
                let perf = if doc == "athletes.csv" { "vo2max" } else { "split_time_s" };
                let p = col(perf).unwrap();
                let mut vals: Vec<f64> = rows.iter().filter_map(|r| r[p].parse().ok()).collect();
                vals.sort_by(f64::total_cmp);
                let (q1, q2) = (type7_quantile(&vals, 1.0 / 3.0), type7_quantile(&vals, 2.0 / 3.0));
                rows.iter()
                    .filter(|r| {
                        let Ok(v) = r[p].parse::<f64>() else { return false };
                        let tier = if v <= q1 { "lower" } else if v <= q2 { "middle" } else { "upper" };
                        tier == value
                    })
                    .collect()
            } else {
                let k = col(key).unwrap();
                rows.iter().filter(|r| r[k] == value).collect()
            };
            for claim in claims(&c.text) {
                let j = col(&claim.column).unwrap();
                let xs: Vec<f64> = members.iter().filter_map(|r| r[j].parse().ok()).collect();
                let n = xs.len() as f64;
                // Reverse-order summation and a two-pass variance.
                let mean = xs.iter().rev().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                let min = xs.iter().cloned().fold(f64::MAX, f64::min);
                let max = xs.iter().cloned().fold(f64::MIN, f64::max);
                let std_ok = match claim.std {
                    Some(s) => rel_close(s, var.sqrt()),
                    None => xs.len() == 1,
                };
                checked += 1;
                if claim.n != xs.len() || !rel_close(claim.mean, mean) || !std_ok || claim.min != min || claim.max != max {
                    mismatches.push(format!("{} {}", c.chunk_id, claim.column));
                }
            }
        }
    }
    let el = t.elapsed();
    let pass = over.is_empty() && kinds.len() == 5 && checked > 100 && mismatches.is_empty() && el < Duration::from_secs(5);
    line(
        6,
        "chunk budgets",
        pass,
        format!(
            "{}/{} non-remainder chunks in range across {} kinds; {} aggregate statistics within 1e-9, {}",
            full.len() - over.len(),
            full.len(),
            kinds.len(),
            checked - mismatches.len(),
            secs(el)
        ),
    );
    assert!(pass, "over: {over:?}\nkinds: {kinds:?}\nmismatches: {mismatches:?}\nchecked {checked}");
}

// ---------------------------------------------------------------------------
// Retrieval oracle

#[test]
fn retrieval_matches_brute_force() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dim = 16;
    let strokes = ["Freestyle", "Backstroke", "General"];
    let categories = ["Performance", "Physiological", "Unstructured"];
    let docs = ["a.md", "b.csv", "c.md", "d.csv"];
    let mut index = VectorIndex::new(dim);
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    for i in 0..1000 {
        // Every tenth chunk repeats an earlier vector to exercise ties.
        let v: Vec<f64> = if i % 10 == 9 {
            vectors[rng.random_range(0..vectors.len())].clone()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        vectors.push(v.clone());
        let meta = ChunkMetadata {
            source_type: categories[rng.random_range(0..3)].into(),
            data_category: categories[rng.random_range(0..3)].into(),
            stroke_type: strokes[rng.random_range(0..3)].into(),
            document_name: docs[rng.random_range(0..4)].into(),
            complexity_level: ["Low", "Medium", "High"][rng.random_range(0..3)].into(),
        };
        index
            .insert(Chunk {
                chunk_id: format!("c{:04}", rng.random_range(0..100_000)) + &format!("-{i}"),
                text: String::new(),
                token_count: 0,
                metadata: meta,
                budget: metasynth::ingest::BudgetKind::Record,
                remainder: false,
                embedding: Some(v),
            })
            .unwrap();
    }
    let fields = [
        (MetadataField::SourceType, &categories[..]),
        (MetadataField::DataCategory, &categories[..]),
        (MetadataField::StrokeType, &strokes[..]),
        (MetadataField::DocumentName, &docs[..]),
    ];
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut agree = 0;
    let mut tie_queries = 0;
    for q in 0..200 {
        // Some queries reuse a stored vector so exact ties reach the top five.
        let query: Vec<f64> = if q % 4 == 0 {
            vectors[rng.random_range(0..vectors.len())].clone()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let mut filter = MetadataFilter::any();
        for _ in 0..rng.random_range(0..3) {
            let (f, vals) = fields[rng.random_range(0..fields.len())];
            filter = filter.with(f, vals[rng.random_range(0..vals.len())]);
        }
        let got: Vec<String> = index.retrieve(&query, 5, &filter).into_iter().map(|s| s.chunk.chunk_id).collect();
        let mut brute: Vec<(f64, &str)> = index
            .chunks()
            .iter()
            .filter(|c| {
                filter.0.iter().all(|(f, v)| {
                    let m = &c.metadata;
                    let have = match f {
                        MetadataField::SourceType => &m.source_type,
                        MetadataField::DataCategory => &m.data_category,
                        MetadataField::StrokeType => &m.stroke_type,
                        MetadataField::DocumentName => &m.document_name,
                        MetadataField::ComplexityLevel => &m.complexity_level,
                    };
                    have == v
                })
            })
            .map(|c| (cos(&query, c.embedding.as_ref().unwrap()), c.chunk_id.as_str()))
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let top: Vec<String> = brute.iter().take(5).map(|(_, id)| id.to_string()).collect();
        if brute.len() > 1 && brute.windows(2).take(5).any(|w| w[0].0 == w[1].0) {
            tie_queries += 1;
        }
        if got == top {
            agree += 1;
        }
    }
    let el = t.elapsed();
    let pass = agree == 200 && el < Duration::from_secs(10);
    line(
        7,
        "retrieval oracle",
        pass,
        format!("{agree}/200 queries equal brute-force top-5 ({tie_queries} with exact ties), {}", secs(el)),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Statistical anchors

fn two_pass_r(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn statistical_anchors_fire_on_planted_strata_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let planted = [(StrokeType::Freestyle, TrainingPhase::Base), (StrokeType::Butterfly, TrainingPhase::Taper)];
    let noise = [
        (StrokeType::Backstroke, TrainingPhase::Build),
        (StrokeType::Breaststroke, TrainingPhase::Peak),
        (StrokeType::IM, TrainingPhase::Recovery),
    ];
    let mut csv_text = String::from("session_id,stroke_type,training_phase,fatigue_score,hrv,imu3_acc_z\n");
    let mut id = 0;
    for (s, p) in planted.iter().chain(&noise) {
        let is_planted = planted.contains(&(*s, *p));
        for _ in 0..30 {
            id += 1;
            let f: f64 = rng.random_range(1.0..9.0);
            let z = if is_planted { 3.0 * f - 2.0 } else { rng.random_range(5.0..20.0) };
            let h: f64 = rng.random_range(40.0..90.0);
            csv_text.push_str(&format!("S{id:03},{s},{p},{f},{h},{z}\n"));
        }
    }
    let table = DataTable::from_csv_str("sessions.csv", &csv_text).unwrap();
    let th = ThresholdConfig::default();
    let mut fired = BTreeSet::new();
    let mut r_err = 0.0f64;
    let mut strata = 0;
    for (s, p) in planted.iter().chain(&noise) {
        strata += 1;
        let seed = QuerySeed {
            seed_id: "X".into(),
            seed_kind: SeedKind::Factorial,
            anchor_type: AnchorType::FatigueKinematic,
            stroke_type: *s,
            training_phase: *p,
            complexity_level: ComplexityLevel::Medium,
            target_variables: vec![],
        };
        if let Some((anchor, ev)) = detect_anchor_statistical(&seed, std::slice::from_ref(&table), &th) {
            fired.insert((*s, *p));
            assert_eq!(anchor.anchor_variables, ["fatigue_score", "imu3_acc_z"]);
            let pairs: Vec<(f64, f64)> = csv_text
                .lines()
                .skip(1)
                .map(|l| l.split(',').collect::<Vec<_>>())
                .filter(|c| c[1] == s.as_str() && c[2] == p.as_str())
                .map(|c| (c[3].parse().unwrap(), c[5].parse().unwrap()))
                .collect();
            r_err = r_err.max((ev.correlation - two_pass_r(&pairs)).abs());
        }
    }
    // Random data for the estimator agreement.
    for k in 0..50 {
        let n = 5 + k * 7;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-50.0..50.0);
                (x, 0.3 * x + rng.random_range(-20.0..20.0))
            })
            .collect();
        r_err = r_err.max((pearson(&pairs).unwrap() - two_pass_r(&pairs)).abs());
    }
    let expected: BTreeSet<_> = planted.iter().copied().collect();
    let pass = fired == expected && r_err <= 1e-9;
    line(
        8,
        "statistical anchor oracle",
        pass,
        format!(
            "fired on {}/{} strata, exactly the {} planted; max |r - two-pass r| = {r_err:.1e}",
            fired.len(),
            strata,
            planted.len()
        ),
    );
    assert!(pass, "{fired:?}");
}

// ---------------------------------------------------------------------------
// End-to-end determinism and resume

/// Routes generator and regenerator requests to a fault-planting template.
struct FixtureRoles {
    plain: TemplateProvider,
    faulty: TemplateProvider,
}

impl CompletionProvider for FixtureRoles {
    fn complete_raw(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        match req.role {
            AgentRole::Generator | AgentRole::Regenerator => self.faulty.complete_raw(req),
            _ => self.plain.complete_raw(req),
        }
    }
}

fn scripted_config(src: &Path, out: &Path, script: &Path) -> PipelineConfig {
    let mut cfg = fixture_config(src, out);
    let s = ProviderSettings::Scripted { script: script.to_path_buf() };
    cfg.providers.architect = s.clone();
    cfg.providers.generator = s.clone();
    cfg.providers.critic = s.clone();
    cfg.providers.regenerator = s;
    cfg
}

fn outputs(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    (
        std::fs::read(dir.join("validated_triplets.jsonl")).unwrap(),
        std::fs::read(dir.join("hitl_triplets.jsonl")).unwrap(),
    )
}

fn interrupted(r: metasynth::Result<pipeline::PipelineReport>) -> String {
    match r {
        Err(Error::Interrupted { stage, after }) => format!("{stage} after {after}"),
        other => panic!("expected an interruption, got {other:?}"),
    }
}

#[test]
fn end_to_end_runs_are_deterministic_across_resume() {
    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let src = root.path().join("sources");
    write_fixture_tree(&src, 2).unwrap();

    // Record a template run into a script.
    let recorder = Arc::new(RecordingProvider::new(Arc::new(FixtureRoles {
        plain: TemplateProvider::new(TemplateConfig::default()),
        faulty: TemplateProvider::new(TemplateConfig { plant_faults: true }),
    })));
    let rec_cfg = fixture_config(&src, &root.path().join("recorded"));
    Pipeline::with_providers(rec_cfg, Providers::shared(recorder.clone()))
        .unwrap()
        .run(&StopPoints::default())
        .unwrap();
    let mut script = recorder.script();
    script.strict = true;
    let script_path = root.path().join("script.json");
    script.save(&script_path).unwrap();

    // Control run under the strict script.
    let control_dir = root.path().join("control");
    let control = Pipeline::from_config(scripted_config(&src, &control_dir, &script_path))
        .unwrap()
        .run(&StopPoints::default())
        .unwrap();
    let reference = outputs(&control_dir);
    assert_eq!(reference, outputs(&root.path().join("recorded")));

    // Same run, interrupted three times, then resumed.
    let killed = root.path().join("killed");
    let cfg = scripted_config(&src, &killed, &script_path);
    let p = Pipeline::from_config(cfg.clone()).unwrap();
    let stops = [
        interrupted(p.run(&StopPoints { ingest_after_files: Some(3), ..Default::default() })),
        interrupted(p.run(&StopPoints { generator_after_anchors: Some(2), ..Default::default() })),
        interrupted(p.run(&StopPoints { critic_after_triplets: Some(17), ..Default::default() })),
    ];
    // A torn write after the last checkpoint must be discarded on resume.
    let mut f = std::fs::OpenOptions::new().append(true).open(killed.join("validated_triplets.jsonl")).unwrap();
    std::io::Write::write_all(&mut f, b"{\"triplet_id\": \"torn").unwrap();
    drop(f);
    let resumed = pipeline::resume(&killed, Some(&cfg.run_id())).unwrap();
    let identical = outputs(&killed) == reference;

    // A rerun after completion changes nothing and reports every stage done.
    let again = pipeline::resume(&killed, None).unwrap();
    let unchanged = outputs(&killed) == reference;
    let all_done = again.rows.iter().all(|r| r.status == pipeline::StageStatus::AlreadyComplete);

    let c = control.counts;
    let shape = c.anchors == 4 && c.drafts == 40 && c.validated + c.hitl == 40 && resumed.counts == c;
    let el = t.elapsed();
    let pass = identical && unchanged && all_done && shape && el < Duration::from_secs(60);
    line(
        9,
        "end-to-end determinism",
        pass,
        format!(
            "control {} anchors / {} drafts / {}+{} out; interrupted at [{}]; resumed outputs {}identical, {}",
            c.anchors,
            c.drafts,
            c.validated,
            c.hitl,
            stops.join(", "),
            if identical { "" } else { "NOT " },
            secs(el)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Regeneration state machine

/// Regenerator whose behaviour is fixed per triplet id: `fix1-*` is fixed on
/// the first cycle, `fix2-*` on the second, `never-*` never.
struct ScriptedFixes;

impl CompletionProvider for ScriptedFixes {
    fn complete_raw(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        assert_eq!(req.role, AgentRole::Regenerator);
        let input: serde_json::Value = prompts::extract(&req.user_prompt).expect("payload");
        let id = input["triplet_id"].as_str().unwrap();
        let cycle = input["cycle"].as_u64().unwrap();
        let fixed = match id.split('-').next().unwrap() {
            "fix1" => true,
            "fix2" => cycle >= 2,
            _ => false,
        };
        let annotation = if fixed {
            PrescriptionAnnotation::for_zone(IntensityZone::EasyAerobic, VolumeClass::Low)
        } else {
            serde_json::from_value(input["annotation"].clone()).unwrap()
        };
        let answer = if fixed { PLAIN_ANSWER } else { input["expected_output"].as_str().unwrap() };
        Ok(serde_json::json!({ "expected_output": answer, "annotation": annotation }).to_string())
    }
}

#[test]
fn regeneration_state_machine() {
    let dir = tempfile::tempdir().unwrap();
    let mut drafts = Vec::new();
    let mut annotations = Vec::new();
    let mut expected: HashMap<String, (FinalStatus, u32)> = HashMap::new();
    let kinds = [
        ("clean", FinalStatus::AutoAccepted, 0),
        ("fix1", FinalStatus::AutoAccepted, 1),
        ("fix2", FinalStatus::AutoAccepted, 2),
        ("never", FinalStatus::HitlPending, 3),
    ];
    for i in 0..24 {
        let (kind, status, ic) = kinds[i % 4];
        let id = format!("{kind}-{i:02}");
        // Planted violation: high volume during Taper.
        let (phase, volume) = if kind == "clean" {
            (TrainingPhase::Build, VolumeClass::Moderate)
        } else {
            (TrainingPhase::Taper, VolumeClass::High)
        };
        drafts.push(triplet(&id, phase, PLAIN_ANSWER));
        annotations.push(AnnotationRecord {
            triplet_id: id.clone(),
            annotation: PrescriptionAnnotation::for_zone(IntensityZone::EasyAerobic, volume),
        });
        expected.insert(id, (status, ic));
    }
    let opts = ValidationOptions::in_dir(dir.path());
    write_jsonl_atomic(&opts.drafts_path, &drafts).unwrap();
    write_jsonl_atomic(&opts.annotations_path, &annotations).unwrap();
    let provider = ScriptedFixes;
    let critic = Critic::new(ThresholdConfig::default(), &provider);
    let report = run_validation(&opts, &critic, &FixedResolver(athlete())).unwrap();

    let validated = read_corpus(&opts.validated_path).unwrap();
    let hitl = read_corpus(&opts.hitl_path).unwrap();
    let mut wrong = Vec::new();
    for t in validated.iter().chain(&hitl) {
        let (status, ic) = expected[&t.triplet_id];
        if t.final_status != status || t.critic_verdict.iteration_count != ic {
            wrong.push(format!("{} {} ic={}", t.triplet_id, t.final_status, t.critic_verdict.iteration_count));
        }
    }
    let conserved = drafts.len() == validated.len() + hitl.len() && report.total == drafts.len();
    let hitl_ok = hitl.iter().all(|t| t.critic_verdict.rule_ids() == [RuleId::P1] && !t.critic_verdict.passed);
    let pass = wrong.is_empty() && conserved && hitl_ok && report.regenerated_accepts == 12 && report.hitl == 6;
    line(
        10,
        "regeneration state machine",
        pass,
        format!(
            "{} direct, {} fixed at ic 1-2, {} escalated at ic 3; {} = {} + {}",
            report.direct_accepts,
            report.regenerated_accepts,
            report.hitl,
            drafts.len(),
            validated.len(),
            hitl.len()
        ),
    );
    assert!(pass, "{wrong:?}");
}

// ---------------------------------------------------------------------------
// Grounding

#[test]
fn grounding_flags_exactly_the_planted_references() {
    let ctx = "Athlete VO2max 62.4 ml/kg/min, resting HRV 71 ms, weekly load 640 AU. \
               Recovery after the Broken 200 Set averaged 36 h. The Catch-Up Drill is used \
               for 4x50 m with 20 s rest at a split of 31.25 s.";
    // (answer, planted ungrounded references)
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("VO2max is 62.4 ml/kg/min.", vec![]),
        ("VO2max is about 62.6 ml/kg/min.", vec![]),
        ("Resting HRV sits at 71 ms.", vec![]),
        ("HRV of 0.071 seconds is typical.", vec![]),
        ("Weekly load of 640 AU is manageable.", vec![]),
        ("Weekly load near 643 AU is manageable.", vec![]),
        ("Allow 36 hours before the next hard set.", vec![]),
        ("Use the Catch-Up Drill on 4x50 m.", vec![]),
        ("Repeat the Broken 200 Set next week.", vec![]),
        ("Hold splits of 31.3 s with 20 s rest.", vec![]),
        ("VO2max is 65.0 ml/kg/min.", vec!["65.0 ml/kg/min"]),
        ("Resting HRV sits at 78 ms.", vec!["78 ms"]),
        ("Weekly load of 700 AU is manageable.", vec!["700 AU"]),
        ("Allow 48 hours before the next hard set.", vec!["48 hours"]),
        ("Use the Tarzan Drill for head position.", vec!["Tarzan Drill"]),
        ("Finish with the Lactate Clearance Protocol.", vec!["Lactate Clearance Protocol"]),
        ("Hold splits of 31.9 s with 20 s rest.", vec!["31.9 s"]),
        ("Use the Catch-Up Drill and a 12 x 100 m main set.", vec!["12", "100 m"]),
        ("VO2max is 62.4 ml/kg/min and HRV is 55 ms.", vec!["55 ms"]),
        ("Swap the Catch-Up Drill for the Sculling Drill at 25 m.", vec!["Sculling Drill", "25 m"]),
    ];
    let mut exact = 0;
    let mut false_pos = 0;
    let mut missed = 0;
    let mut details = Vec::new();
    for (answer, planted) in &cases {
        let got: BTreeSet<String> = check_grounding(answer, ctx, 0.005, true).into_iter().map(|v| v.value).collect();
        let want: BTreeSet<String> = planted.iter().map(|s| s.to_string()).collect();
        false_pos += got.difference(&want).count();
        missed += want.difference(&got).count();
        if got == want {
            exact += 1;
        } else {
            details.push(format!("{answer}: got {got:?}"));
        }
    }
    let kinds: BTreeSet<String> = cases
        .iter()
        .flat_map(|(a, _)| check_grounding(a, ctx, 0.005, true))
        .map(|v| format!("{:?}", v.kind))
        .collect();
    assert!(kinds.contains(&format!("{:?}", ReferenceKind::Drill)));
    let pass = cases.len() == 20 && exact == 20 && false_pos == 0;
    line(
        11,
        "grounding check",
        pass,
        format!("{exact}/20 pairs exact, {false_pos} false positives, {missed} missed"),
    );
    assert!(pass, "{details:#?}");
}

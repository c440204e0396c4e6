//! A small synthetic source tree covering every source kind.
//!
//! Six documents: a drill manual, a physiology handbook, competition results,
//! an athlete profile table, a training-session log and an IMU frame table.
//! Training-session strata carry planted correlations so anchor detection
//! has something to find. Everything is derived from one seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IoContext, Result};
use crate::model::{StrokeType, TrainingPhase};
use crate::pipeline::PipelineConfig;
use crate::providers::{ProviderSettings, TemplateConfig};

pub const ATHLETES: usize = 40;
pub const SENSORS: u8 = 10;
pub const SESSIONS_PER_STRATUM: usize = 24;

/// Strata present in the training-session log.
pub const SESSION_STRATA: [(StrokeType, TrainingPhase); 6] = [
    (StrokeType::Freestyle, TrainingPhase::Base),
    (StrokeType::Freestyle, TrainingPhase::Build),
    (StrokeType::Freestyle, TrainingPhase::Peak),
    (StrokeType::Freestyle, TrainingPhase::Taper),
    (StrokeType::Backstroke, TrainingPhase::Peak),
    (StrokeType::Backstroke, TrainingPhase::Taper),
];

const ATHLETE_STROKES: [StrokeType; 5] = [
    StrokeType::Freestyle,
    StrokeType::Backstroke,
    StrokeType::Breaststroke,
    StrokeType::Butterfly,
    StrokeType::IM,
];

const ATHLETE_PHASES: [TrainingPhase; 5] = [
    TrainingPhase::Base,
    TrainingPhase::Build,
    TrainingPhase::Peak,
    TrainingPhase::Taper,
    TrainingPhase::Recovery,
];

const DRILLS: [(&str, &str); 8] = [
    ("Catch-Up Drill", "front-quadrant timing"),
    ("Fingertip Drag Drill", "a high elbow recovery"),
    ("Single-Arm Drill", "rotation on the non-working side"),
    ("Sculling Drill", "feel for the water at the catch"),
    ("Six-Kick Switch Drill", "body roll driven from the hips"),
    ("Fist Drill", "forearm engagement during the pull"),
    ("Tarzan Drill", "head position and sighting"),
    ("Zipper Drill", "a compact recovery path"),
];

const HANDBOOK: [(&str, &[&str]); 6] = [
    (
        "Aerobic Capacity",
        &[
            "Trained distance swimmers typically present VO2max values between {a} and {b} ml/kg/min.",
            "Aerobic capacity sets the ceiling on how long a swimmer can hold threshold effort without accumulating lactate.",
            "Athletes in the lowest tertile of aerobic capacity respond best to easy aerobic volume before any race pace work.",
            "Repeated testing every {c} weeks is enough to track change across a season.",
            "A rise of {d} percent in aerobic capacity across one block is a strong response for a senior swimmer.",
        ],
    ),
    (
        "Heart Rate Variability",
        &[
            "Morning heart rate variability is compared with a rolling baseline of the previous {c} days.",
            "A reading more than {d} percent under baseline indicates incomplete autonomic recovery.",
            "Under-recovered swimmers should move to low intensity work until the reading returns toward baseline.",
            "Typical resting values for trained swimmers fall between {a} and {b} ms.",
            "Single low readings matter less than a downward trend across several mornings.",
        ],
    ),
    (
        "Fatigue Monitoring",
        &[
            "Self-reported fatigue on a ten-point scale remains the cheapest reliable monitoring tool.",
            "Scores above {c} of 10 sustained for {d} days warrant a reduction in training stress.",
            "Fatigue interacts with stroke mechanics, and tired swimmers shorten the stroke and lift the head.",
            "Coaches should compare each score with the athlete's own history rather than team averages.",
            "Recovery time estimates near {a} hours after a hard set are common in senior squads.",
        ],
    ),
    (
        "Training Load",
        &[
            "Session load in arbitrary units is the product of session duration and perceived exertion.",
            "Weekly loads above {a} AU for developing swimmers call for a planned deload week.",
            "Load progressions of more than {c} percent per week raise injury risk in the shoulder.",
            "Load and adaptation usually rise together until fatigue begins to limit the response.",
            "A stable load of about {b} AU per session suits most aerobic development blocks.",
        ],
    ),
    (
        "Tapering",
        &[
            "A taper reduces volume by {c} to {d} percent while intensity is largely maintained.",
            "Novel skills are not introduced during a taper because they disturb established stroke timing.",
            "Most swimmers reach peak readiness after a taper of {a} to {b} days.",
            "High total volume late in a taper blunts the performance gain it is meant to produce.",
            "Short race-specific efforts keep neuromuscular sharpness through the final week.",
        ],
    ),
    (
        "Recovery Protocols",
        &[
            "Recovery weeks keep structured interval work out of the plan entirely.",
            "Easy technical swimming of {a} to {b} minutes supports blood flow without adding stress.",
            "The Contrast Bath Protocol alternates {c} minutes warm with one minute cold water immersion.",
            "Sleep of at least {d} hours remains the most effective recovery intervention.",
            "Hydration should be restored within a few hours of long sessions.",
        ],
    ),
];

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let a: u32 = rng.random_range(40..60);
    let b = a + rng.random_range(8..20);
    template
        .replace("{a}", &a.to_string())
        .replace("{b}", &b.to_string())
        .replace("{c}", &rng.random_range(3..9u32).to_string())
        .replace("{d}", &rng.random_range(10..16u32).to_string())
}

fn drill_manual(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from("# Freestyle Technique Drills\n\n");
    for (i, (name, focus)) in DRILLS.iter().enumerate() {
        let _ = writeln!(s, "Drill {}: {name}\n", i + 1);
        let mut body = String::new();
        let sentences = [
            format!("The {name} develops {focus} and suits every phase of the season."),
            format!(
                "Swim {} x {} m with {} s rest, holding a relaxed rate near {} cycles/min.",
                rng.random_range(4..10u32),
                [25, 50][rng.random_range(0..2usize)],
                rng.random_range(10..30u32),
                rng.random_range(26..40u32)
            ),
            "Keep the head still and let the body rotate around a long axis.".to_string(),
            format!(
                "Coaches usually pair the {name} with easy aerobic swimming so that the new pattern is rehearsed at low effort."
            ),
            format!(
                "Swimmers with low stroke classification confidence should master clean full-stroke swimming before adding the {name}."
            ),
            format!(
                "Film the drill from the side every {} sessions and compare the catch position with the previous recording.",
                rng.random_range(2..6u32)
            ),
            "Stop the set when the movement pattern breaks down rather than finishing tired repetitions.".to_string(),
            format!(
                "A typical progression adds {} m of full stroke after each drill length.",
                [25, 50, 75][rng.random_range(0..3usize)]
            ),
        ];
        let mut k = 0;
        while body.len() < 1500 {
            body.push_str(&sentences[k % sentences.len()]);
            body.push(' ');
            if k % 4 == 3 {
                body.push_str("\n\n");
            }
            k += 1;
        }
        s.push_str(body.trim_end());
        s.push_str("\n\n");
    }
    s
}

fn handbook(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from("# Applied Swimming Physiology\n\n");
    for (title, templates) in HANDBOOK {
        let _ = writeln!(s, "## {title}\n");
        let mut body = String::new();
        let mut k = 0;
        while body.len() < 2000 {
            body.push_str(&fill(templates[k % templates.len()], rng));
            body.push(' ');
            if k % 5 == 4 {
                body.push_str("\n\n");
            }
            k += 1;
        }
        s.push_str(body.trim_end());
        s.push_str("\n\n");
    }
    s
}

const SURNAMES: [&str; 8] = ["Brennan", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Silva", "Novak", "Hughes"];

fn results(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from("# Regional Championships Results\n\n");
    let events = [
        ("100 m Freestyle", 48.0),
        ("200 m Freestyle", 106.0),
        ("100 m Backstroke", 54.0),
        ("200 m Backstroke", 117.0),
        ("100 m Breaststroke", 60.0),
        ("100 m Butterfly", 52.0),
    ];
    for (i, (event, base)) in events.iter().enumerate() {
        let _ = writeln!(s, "Event {}: Men's {event} Final\n", i + 1);
        let _ = writeln!(
            s,
            "The final was swum in lane order with a water temperature of {} degrees.",
            rng.random_range(26..28u32)
        );
        let mut t = *base + rng.random_range(0.0..1.0);
        for (place, name) in SURNAMES.iter().enumerate() {
            t += rng.random_range(0.05..0.6);
            let _ = writeln!(
                s,
                "{}. {}. {name} finished in {t:.2} s with a reaction time of {:.2} s.",
                place + 1,
                (b'A' + place as u8) as char,
                rng.random_range(0.58..0.75)
            );
        }
        s.push('\n');
    }
    s
}

fn athletes(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from(
        "athlete_id,stroke_type,training_phase,fatigue_score,recovery_time_hr,adaptation_pct,training_load_au,vo2max,hrv,stroke_prob,hydration_level,biomechanical_efficiency\n",
    );
    for i in 0..ATHLETES {
        let stroke = ATHLETE_STROKES[i % 5];
        let phase = ATHLETE_PHASES[(i / 5) % 5];
        let fatigue = if i % 7 == 2 { rng.random_range(7.5..9.5) } else { rng.random_range(2.0..6.8) };
        let hrv_v = rng.random_range(55.0..90.0);
        let _ = writeln!(
            s,
            "A{:03},{stroke},{phase},{fatigue:.1},{:.0},{:.1},{:.0},{:.1},{hrv_v:.1},{:.2},{:.1},{:.2}",
            i + 1,
            rng.random_range(12.0..48.0),
            rng.random_range(0.5..8.0),
            rng.random_range(300.0..950.0),
            rng.random_range(48.0..72.0),
            if i % 9 == 4 { rng.random_range(0.4..0.58) } else { rng.random_range(0.65..0.98) },
            rng.random_range(55.0..68.0),
            rng.random_range(0.55..0.9),
        );
    }
    s
}

fn sessions(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from(
        "session_id,athlete_id,stroke_type,training_phase,fatigue_score,hrv,training_load_au,adaptation_pct,split_time_s,swimming_speed,stroke_rate,stroke_prob,imu3_acc_z,imu7_gyro_y\n",
    );
    let mut n = 0;
    for (k, (stroke, phase)) in SESSION_STRATA.iter().enumerate() {
        for _ in 0..SESSIONS_PER_STRATUM {
            n += 1;
            let athlete = if *stroke == StrokeType::Freestyle { 1 + 5 * (n % 8) } else { 2 + 5 * (n % 8) };
            let fatigue: f64 = rng.random_range(1.0..9.0);
            let load: f64 = rng.random_range(300.0..900.0);
            let prob: f64 = rng.random_range(0.45..0.98);
            let noise = |rng: &mut ChaCha8Rng, w: f64| rng.random_range(-w..w);
            // Each stratum plants one relationship; the rest is noise.
            let split = if k % 2 == 0 { 30.0 + load / 100.0 + noise(rng, 0.3) } else { rng.random_range(30.0..40.0) };
            let imu3 = if k % 3 == 1 { 9.0 + 0.8 * fatigue + noise(rng, 0.4) } else { rng.random_range(8.0..18.0) };
            let gyro7 = if k % 3 == 2 { 120.0 - 80.0 * prob + noise(rng, 4.0) } else { rng.random_range(40.0..120.0) };
            let _ = writeln!(
                s,
                "S{n:04},A{athlete:03},{stroke},{phase},{fatigue:.2},{:.1},{load:.0},{:.2},{split:.2},{:.3},{:.1},{prob:.3},{imu3:.3},{gyro7:.2}",
                rng.random_range(50.0..90.0),
                rng.random_range(0.5..8.0),
                100.0 / split,
                rng.random_range(28.0..42.0),
            );
        }
    }
    s
}

fn kinematics(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from("athlete_id,sensor_id,timestamp,stroke_type,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z\n");
    for i in 0..ATHLETES {
        let stroke = ATHLETE_STROKES[i % 5];
        for sensor in 1..=SENSORS {
            let scale = if i % 6 == 0 && sensor % 3 == 0 { 2.2 } else { 1.0 };
            let base = 4.0 + sensor as f64;
            let _ = writeln!(
                s,
                "A{:03},{sensor},{:.2},{stroke},{:.3},{:.3},{:.3},{:.2},{:.2},{:.2}",
                i + 1,
                0.01 * sensor as f64,
                scale * (base + rng.random_range(-0.8..0.8)),
                scale * rng.random_range(-2.0..2.0),
                scale * (base / 2.0 + rng.random_range(-0.8..0.8)),
                rng.random_range(-90.0..90.0),
                rng.random_range(-90.0..90.0),
                rng.random_range(-90.0..90.0),
            );
        }
    }
    s
}

fn write(root: &Path, rel: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = root.join(rel);
    if let Some(dir) = p.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(&p, text).at(&p)?;
    files.push(p);
    Ok(())
}

/// Write the tree under `root` and return the document paths (folder
/// declarations excluded).
pub fn write_fixture_tree(root: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut decl = Vec::new();
    write(
        root,
        "coaching/_folder_info.json",
        r#"{"source_kind": "DrillManual", "stroke_type": "Freestyle", "complexity_level": "Medium"}"#,
        &mut decl,
    )?;
    write(root, "coaching/drill_manual.md", &drill_manual(&mut rng), &mut docs)?;
    write(
        root,
        "physiology/_folder_info.json",
        r#"{"source_kind": "PhysiologyHandbook", "complexity_level": "High"}"#,
        &mut decl,
    )?;
    write(root, "physiology/physiology_handbook.md", &handbook(&mut rng), &mut docs)?;
    write(
        root,
        "results/_folder_info.json",
        r#"{"source_kind": "CompetitionResults", "source_type": "Performance", "data_category": "Performance"}"#,
        &mut decl,
    )?;
    write(root, "results/competition_results.md", &results(&mut rng), &mut docs)?;
    write(
        root,
        "data/_folder_info.json",
        r#"{"source_type": "Physiological", "data_category": "Physiological", "complexity_level": "High"}"#,
        &mut decl,
    )?;
    write(root, "data/athletes.csv", &athletes(&mut rng), &mut docs)?;
    write(root, "data/training_sessions.csv", &sessions(&mut rng), &mut docs)?;
    write(root, "data/imu/kinematics.csv", &kinematics(&mut rng), &mut docs)?;
    Ok(docs)
}

/// A fast configuration for the fixture tree: the first 20 seeds, ten
/// triplets per anchor, template providers with planted faults for the
/// generator.
pub fn fixture_config(source_root: &Path, output_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        source_root: source_root.to_path_buf(),
        output_dir: output_dir.to_path_buf(),
        ..PipelineConfig::default()
    };
    cfg.seeds.limit = Some(20);
    cfg.providers.generator = ProviderSettings::Template(TemplateConfig { plant_faults: true });
    cfg.providers.regenerator = ProviderSettings::Template(TemplateConfig { plant_faults: true });
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::tabular::{DataTable, TableSchema};

    #[test]
    fn tree_is_deterministic_and_tables_parse() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let da = write_fixture_tree(a.path(), 7).unwrap();
        let db = write_fixture_tree(b.path(), 7).unwrap();
        assert_eq!(da.len(), 6);
        for (x, y) in da.iter().zip(&db) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let schemas: Vec<TableSchema> = da
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| DataTable::from_csv_path(p).unwrap().schema)
            .collect();
        assert_eq!(
            schemas,
            [TableSchema::AthleteProfile, TableSchema::TrainingLog, TableSchema::KinematicFrames]
        );
        let log = DataTable::from_csv_path(&a.path().join("data/training_sessions.csv")).unwrap();
        assert_eq!(log.rows.len(), SESSION_STRATA.len() * SESSIONS_PER_STRATUM);
    }
}

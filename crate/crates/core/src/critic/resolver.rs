//! Maps each triplet to the athlete state its rules are checked against.

use std::collections::BTreeMap;
use std::path::Path;

use tracing::warn;
use walkdir::WalkDir;

use super::rules::{AthleteContext, ChannelBaseline, KinematicContext, PopulationStats};
use crate::error::{Error, Result};
use crate::ingest::tabular::{quantile, DataTable, TableSchema};
use crate::model::{AthleteStateRecord, GoldenTriplet, KinematicFrame, StrokeType, ThresholdConfig};
use crate::vecstore::fnv1a_str;

pub trait ContextResolver {
    fn resolve(&self, triplet: &GoldenTriplet) -> Result<AthleteContext>;
}

#[derive(Debug, Clone)]
struct AthleteRow {
    id: String,
    stroke: Option<String>,
    phase: Option<String>,
    state: AthleteStateRecord,
}

/// Resolves rule contexts from an athlete profile table and, optionally, a
/// table of IMU frames.
///
/// The athlete is chosen deterministically from the rows matching the
/// triplet's stroke and phase (falling back to stroke only, then to all rows)
/// by hashing the triplet id. The HRV baseline is the population mean unless
/// the table carries its own `hrv_baseline` column.
#[derive(Debug, Clone)]
pub struct TableResolver {
    athletes: Vec<AthleteRow>,
    frames: BTreeMap<String, Vec<KinematicFrame>>,
    baselines: BTreeMap<u8, ChannelBaseline>,
    population: PopulationStats,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl TableResolver {
    pub fn from_tables(
        athletes: &DataTable,
        kinematics: Option<&DataTable>,
        thresholds: &ThresholdConfig,
    ) -> Result<Self> {
        if athletes.schema != TableSchema::AthleteProfile {
            return Err(Error::Precondition(format!(
                "{} is not an athlete profile table",
                athletes.document_name
            )));
        }
        if athletes.rows.is_empty() {
            return Err(Error::Precondition(format!(
                "{} has no athletes",
                athletes.document_name
            )));
        }
        let hrv: Vec<f64> = (0..athletes.rows.len())
            .filter_map(|r| athletes.number(r, "hrv"))
            .collect();
        let hrv_mean = (!hrv.is_empty()).then(|| mean_std(&hrv).0);
        let rows = (0..athletes.rows.len())
            .map(|r| {
                let n = |c: &str| athletes.number(r, c);
                let state = AthleteStateRecord {
                    fatigue_score: n("fatigue_score"),
                    recovery_time_hr: n("recovery_time_hr"),
                    adaptation_pct: n("adaptation_pct"),
                    training_load_au: n("training_load_au"),
                    vo2max: n("vo2max"),
                    hrv: n("hrv"),
                    hrv_baseline: n("hrv_baseline").or(hrv_mean),
                    stroke_prob: n("stroke_prob"),
                    hydration_level: n("hydration_level"),
                    biomechanical_efficiency: n("biomechanical_efficiency"),
                };
                state.validate()?;
                Ok(AthleteRow {
                    id: athletes.cell(r, "athlete_id").unwrap_or_default().to_string(),
                    stroke: athletes.cell(r, "stroke_type").map(str::to_string),
                    phase: athletes.cell(r, "training_phase").map(str::to_string),
                    state,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let sorted = |col: &str| {
            let mut v: Vec<f64> = (0..athletes.rows.len())
                .filter_map(|r| athletes.number(r, col))
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let vo2 = sorted("vo2max");
        let adapt = sorted("adaptation_pct");
        let population = PopulationStats {
            vo2max_tertiles: (!vo2.is_empty())
                .then(|| (quantile(&vo2, 1.0 / 3.0), quantile(&vo2, 2.0 / 3.0))),
            adaptation_elevated_at: (!adapt.is_empty())
                .then(|| quantile(&adapt, thresholds.adaptation_percentile / 100.0)),
        };

        let mut frames: BTreeMap<String, Vec<KinematicFrame>> = BTreeMap::new();
        let mut by_sensor: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        if let Some(k) = kinematics {
            if k.schema != TableSchema::KinematicFrames {
                return Err(Error::Precondition(format!(
                    "{} is not a kinematic frame table",
                    k.document_name
                )));
            }
            for r in 0..k.rows.len() {
                let n = |c: &str| k.number(r, c).unwrap_or(0.0);
                let Some(sensor) = k.number(r, "sensor_id") else {
                    continue;
                };
                let frame = KinematicFrame {
                    sensor_id: sensor as u8,
                    acc: [n("acc_x"), n("acc_y"), n("acc_z")],
                    gyro: [n("gyro_x"), n("gyro_y"), n("gyro_z")],
                    timestamp: n("timestamp"),
                    stroke_type: k
                        .cell(r, "stroke_type")
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(StrokeType::General),
                };
                frame.validate()?;
                by_sensor
                    .entry(frame.sensor_id)
                    .or_default()
                    .push(frame.acc_magnitude());
                let id = k.cell(r, "athlete_id").unwrap_or_default().to_string();
                frames.entry(id).or_default().push(frame);
            }
        }
        let baselines = by_sensor
            .into_iter()
            .map(|(s, mags)| {
                let (mean, std) = mean_std(&mags);
                (s, ChannelBaseline { mean, std })
            })
            .collect();
        Ok(TableResolver {
            athletes: rows,
            frames,
            baselines,
            population,
        })
    }

    /// Find the athlete profile table and (optionally) the kinematic table
    /// among the CSV files under `root`.
    pub fn discover(root: &Path, thresholds: &ThresholdConfig) -> Result<Self> {
        let mut athletes = None;
        let mut kinematics = None;
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::Config(format!("walking {}: {e}", root.display())))?;
            let p = entry.path();
            if !p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                continue;
            }
            let table = match DataTable::from_csv_path(p) {
                Ok(t) => t,
                Err(e) => {
                    warn!(path = %p.display(), error = %e, "table unusable for rule contexts");
                    continue;
                }
            };
            match table.schema {
                TableSchema::AthleteProfile if athletes.is_none() => athletes = Some(table),
                TableSchema::KinematicFrames if kinematics.is_none() => kinematics = Some(table),
                _ => {}
            }
        }
        let athletes = athletes.ok_or_else(|| {
            Error::Precondition(format!("no athlete profile table under {}", root.display()))
        })?;
        Self::from_tables(&athletes, kinematics.as_ref(), thresholds)
    }

    pub fn population(&self) -> &PopulationStats {
        &self.population
    }

    fn pick(&self, t: &GoldenTriplet) -> &AthleteRow {
        let stroke = t.stroke_type.as_str();
        let phase = t.training_phase.as_str();
        let exact: Vec<&AthleteRow> = self
            .athletes
            .iter()
            .filter(|a| a.stroke.as_deref() == Some(stroke) && a.phase.as_deref() == Some(phase))
            .collect();
        let pool = if !exact.is_empty() {
            exact
        } else {
            let by_stroke: Vec<&AthleteRow> = self
                .athletes
                .iter()
                .filter(|a| a.stroke.as_deref() == Some(stroke))
                .collect();
            if by_stroke.is_empty() {
                self.athletes.iter().collect()
            } else {
                by_stroke
            }
        };
        pool[(fnv1a_str(&t.triplet_id) % pool.len() as u64) as usize]
    }
}

impl ContextResolver for TableResolver {
    fn resolve(&self, triplet: &GoldenTriplet) -> Result<AthleteContext> {
        let a = self.pick(triplet);
        Ok(AthleteContext {
            athlete: a.state.clone(),
            kinematics: KinematicContext {
                frames: self.frames.get(&a.id).cloned().unwrap_or_default(),
                baselines: self.baselines.clone(),
            },
            population: self.population.clone(),
        })
    }
}

/// Resolves every triplet to the same context.
#[derive(Debug, Clone)]
pub struct FixedResolver(pub AthleteContext);

impl ContextResolver for FixedResolver {
    fn resolve(&self, _: &GoldenTriplet) -> Result<AthleteContext> {
        Ok(self.0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sample_triplet;

    const ATHLETES: &str = "\
athlete_id,stroke_type,training_phase,fatigue_score,vo2max,hrv,adaptation_pct
a1,Freestyle,Base,5,50,60,1
a2,Freestyle,Base,6,60,80,2
a3,Backstroke,Peak,7,70,70,3
a4,Backstroke,Peak,8,55,90,4
";

    const FRAMES: &str = "\
athlete_id,sensor_id,timestamp,stroke_type,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z
a1,3,0.0,Freestyle,3,4,0,0,0,0
a2,3,0.0,Freestyle,6,8,0,0,0,0
";

    fn resolver() -> TableResolver {
        let a = DataTable::from_csv_str("athletes.csv", ATHLETES).unwrap();
        let k = DataTable::from_csv_str("imu.csv", FRAMES).unwrap();
        TableResolver::from_tables(&a, Some(&k), &ThresholdConfig::default()).unwrap()
    }

    #[test]
    fn baseline_is_population_mean() {
        let r = resolver();
        let ctx = r.resolve(&sample_triplet("x")).unwrap();
        assert_eq!(ctx.athlete.hrv_baseline, Some(75.0));
        let b = r.baselines[&3];
        assert_eq!(b.mean, 7.5);
        assert!((b.std - (12.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn picks_from_matching_stratum_deterministically() {
        let r = resolver();
        let mut t = sample_triplet("A001-T004");
        t.stroke_type = StrokeType::Backstroke;
        t.training_phase = crate::model::TrainingPhase::Peak;
        let first = r.resolve(&t).unwrap();
        assert_eq!(first, r.resolve(&t).unwrap());
        assert!([Some(7.0), Some(8.0)].contains(&first.athlete.fatigue_score));
    }

    #[test]
    fn population_cut_points() {
        let r = resolver();
        let (q1, q2) = r.population().vo2max_tertiles.unwrap();
        assert!((q1 - 55.0).abs() < 1e-9 && (q2 - 60.0).abs() < 1e-9);
        assert_eq!(r.population().adaptation_elevated_at, Some(3.25));
    }
}

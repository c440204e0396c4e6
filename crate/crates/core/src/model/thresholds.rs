use serde::{Deserialize, Serialize};

use super::IntensityZone;
use crate::error::{Error, Result};

/// Which side of the stroke_prob threshold rejects a drill prescription.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum B1Direction {
    /// Reject drills when stroke_prob < threshold (deformation under fatigue).
    #[default]
    RejectBelow,
    /// Reject drills when stroke_prob > threshold.
    RejectAbove,
}

/// Contiguous band of permitted intensity zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneBand {
    pub lowest: IntensityZone,
    pub highest: IntensityZone,
}

impl ZoneBand {
    pub fn permits(&self, zone: IntensityZone) -> bool {
        self.lowest <= zone && zone <= self.highest
    }
}

/// Permitted zones per VO2max tertile of the athlete population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneBands {
    pub low: ZoneBand,
    pub mid: ZoneBand,
    pub high: ZoneBand,
}

impl Default for ZoneBands {
    fn default() -> Self {
        ZoneBands {
            low: ZoneBand {
                lowest: IntensityZone::Recovery,
                highest: IntensityZone::Threshold,
            },
            mid: ZoneBand {
                lowest: IntensityZone::Recovery,
                highest: IntensityZone::VO2max,
            },
            high: ZoneBand {
                lowest: IntensityZone::Recovery,
                highest: IntensityZone::Supramaximal,
            },
        }
    }
}

/// Population-level thresholds. Defaults for the fatigue, stroke_prob, HRV,
/// regeneration-ceiling and checkpoint values are the published ones; the
/// rest are tunable artifact choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub fatigue_high: f64,
    pub stroke_prob_low: f64,
    pub hrv_suppression_pct: f64,
    /// No published value; 850 AU is the fixture default.
    pub load_safe_max_au: f64,
    pub max_regeneration_cycles: u32,
    pub checkpoint_interval_triplets: usize,
    pub b2_z_threshold: f64,
    pub grounding_numeric_rel_tol: f64,
    pub hitl_sample_rate: f64,
    pub retrieval_k: usize,
    /// Percentile of the athlete table above which adaptation_pct counts as elevated (F3).
    pub adaptation_percentile: f64,
    pub min_correlation: f64,
    pub min_sample_size: usize,
    pub zone_bands: ZoneBands,
    pub b1_direction: B1Direction,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            fatigue_high: 7.0,
            stroke_prob_low: 0.6,
            hrv_suppression_pct: 15.0,
            load_safe_max_au: 850.0,
            max_regeneration_cycles: 3,
            checkpoint_interval_triplets: 50,
            b2_z_threshold: 2.0,
            grounding_numeric_rel_tol: 0.005,
            hitl_sample_rate: 0.05,
            retrieval_k: 5,
            adaptation_percentile: 75.0,
            min_correlation: 0.5,
            min_sample_size: 20,
            zone_bands: ZoneBands::default(),
            b1_direction: B1Direction::RejectBelow,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fatigue_high", self.fatigue_high),
            ("stroke_prob_low", self.stroke_prob_low),
            ("hrv_suppression_pct", self.hrv_suppression_pct),
            ("load_safe_max_au", self.load_safe_max_au),
            ("b2_z_threshold", self.b2_z_threshold),
            ("grounding_numeric_rel_tol", self.grounding_numeric_rel_tol),
            ("hitl_sample_rate", self.hitl_sample_rate),
            ("adaptation_percentile", self.adaptation_percentile),
            ("min_correlation", self.min_correlation),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("threshold {name} must be > 0, got {v}")));
            }
        }
        if self.max_regeneration_cycles < 1 {
            return Err(Error::Config("max_regeneration_cycles must be >= 1".into()));
        }
        if self.checkpoint_interval_triplets == 0 || self.retrieval_k == 0 || self.min_sample_size == 0
        {
            return Err(Error::Config(
                "checkpoint_interval_triplets, retrieval_k and min_sample_size must be >= 1".into(),
            ));
        }
        if self.hitl_sample_rate > 1.0 || self.stroke_prob_low > 1.0 || self.min_correlation > 1.0 {
            return Err(Error::Config(
                "hitl_sample_rate, stroke_prob_low and min_correlation must be <= 1".into(),
            ));
        }
        if self.adaptation_percentile > 100.0 || self.hrv_suppression_pct >= 100.0 {
            return Err(Error::Config(
                "adaptation_percentile must be <= 100 and hrv_suppression_pct < 100".into(),
            ));
        }
        for band in [self.zone_bands.low, self.zone_bands.mid, self.zone_bands.high] {
            if band.lowest > band.highest {
                return Err(Error::Config(format!("empty zone band {band:?}")));
            }
        }
        Ok(())
    }
}

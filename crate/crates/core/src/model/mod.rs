//! Shared domain types.
//!
//! Every enumeration serializes to a fixed wire identifier and rejects
//! unknown values at parse time. `label()` gives the human-readable form used
//! in reports ("Elite Coach", "HITL-Pending").

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

mod schema;
mod thresholds;
pub mod variables;

pub use schema::{validate_corpus_file, validate_triplet, SchemaIssue, SchemaReport, TRIPLET_FIELDS};
pub use thresholds::{B1Direction, ThresholdConfig, ZoneBand, ZoneBands};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
}

impl fmt::Display for UnknownVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown {} `{}`", self.kind, self.value)
    }
}

impl std::error::Error for UnknownVariant {}

macro_rules! domain_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $wire:literal, $label:literal;)+ }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $wire),+ }
            }

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownVariant;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($wire => Ok($name::$variant),)+
                    _ => Err(UnknownVariant { kind: stringify!($name), value: s.to_string() }),
                }
            }
        }
    };
}

domain_enum!(QueryType {
    Simple => "Simple", "Simple";
    Reasoning => "Reasoning", "Reasoning";
    Multimodal => "Multimodal", "Multimodal";
});

domain_enum!(Persona {
    EliteCoach => "EliteCoach", "Elite Coach";
    NoviceSwimmer => "NoviceSwimmer", "Novice Swimmer";
    BiometricAnalyst => "BiometricAnalyst", "Biometric Analyst";
    SportsScientist => "SportsScientist", "Sports Scientist";
    Physiotherapist => "Physiotherapist", "Physiotherapist";
});

domain_enum!(ComplexityLevel {
    Low => "Low", "Low";
    Medium => "Medium", "Medium";
    High => "High", "High";
});

domain_enum!(AnchorType {
    FatigueKinematic => "FatigueKinematic", "Fatigue-Kinematic";
    LoadPerformance => "LoadPerformance", "Load-Performance";
    StrokeEfficiency => "StrokeEfficiency", "Stroke-Efficiency";
});

domain_enum!(StrokeType {
    Freestyle => "Freestyle", "Freestyle";
    Backstroke => "Backstroke", "Backstroke";
    Breaststroke => "Breaststroke", "Breaststroke";
    Butterfly => "Butterfly", "Butterfly";
    IM => "IM", "IM";
    General => "General", "General";
});

domain_enum!(TrainingPhase {
    Base => "Base", "Base";
    Build => "Build", "Build";
    Peak => "Peak", "Peak";
    Taper => "Taper", "Taper";
    Recovery => "Recovery", "Recovery";
    General => "General", "General";
});

domain_enum!(DataCategory {
    Performance => "Performance", "Performance";
    Physiological => "Physiological", "Physiological";
    Unstructured => "Unstructured", "Unstructured";
});

domain_enum!(
    /// `Draft` is carried by generator output so a single schema serves every
    /// handoff file.
    FinalStatus {
        Draft => "Draft", "Draft";
        AutoAccepted => "AutoAccepted", "Auto-Accepted";
        HitlPending => "HITLPending", "HITL-Pending";
        HitlAccepted => "HITLAccepted", "HITL-Accepted";
        HitlRevised => "HITLRevised", "HITL-Revised";
    }
);

domain_enum!(RuleId {
    F1 => "F1", "High intensity when fatigue_score > 7.0";
    F2 => "F2", "recovery_time_hr constraint violated";
    F3 => "F3", "Adaptation paradox not acknowledged";
    I1 => "I1", "Intensity zone inconsistent with VO2max";
    I2 => "I2", "training_load_au exceeds safe threshold";
    I3 => "I3", "HRV suppression ignored in prescription";
    P1 => "P1", "High volume or novel skill during Taper";
    P2 => "P2", "Race-pace prescribed during Base";
    P3 => "P3", "Structured training during Recovery";
    B1 => "B1", "Drill prescribed under stroke deformation";
    B2 => "B2", "Intervention when IMU within normal range";
    L1 => "L1", "Internal contradiction in answer";
    L2 => "L2", "Hallucination: reference absent from context";
});

domain_enum!(
    /// Ordered from easiest to hardest.
    IntensityZone {
        Recovery => "Recovery", "Recovery";
        EasyAerobic => "EasyAerobic", "Easy aerobic";
        Threshold => "Threshold", "Threshold";
        VO2max => "VO2max", "VO2max";
        RacePace => "RacePace", "Race pace";
        Supramaximal => "Supramaximal", "Supramaximal";
    }
);

domain_enum!(VolumeClass {
    Low => "Low", "Low";
    Moderate => "Moderate", "Moderate";
    High => "High", "High";
});

domain_enum!(Stage {
    Ingest => "Ingest", "Knowledge Base Construction";
    Architect => "Architect", "Architect Agent";
    Generator => "Generator", "Generator Agent";
    Critic => "Critic", "Critic Agent";
    Done => "Done", "Done";
});

impl RuleId {
    pub fn domain(self) -> &'static str {
        match self {
            RuleId::F1 | RuleId::F2 | RuleId::F3 => "Fatigue",
            RuleId::I1 | RuleId::I2 | RuleId::I3 => "Intensity",
            RuleId::P1 | RuleId::P2 | RuleId::P3 => "Periodization",
            RuleId::B1 | RuleId::B2 => "Biomechanical",
            RuleId::L1 | RuleId::L2 => "Logic",
        }
    }
}

impl FinalStatus {
    pub fn is_human_reviewed_or_pending(self) -> bool {
        matches!(
            self,
            FinalStatus::HitlPending | FinalStatus::HitlAccepted | FinalStatus::HitlRevised
        )
    }
}

impl IntensityZone {
    pub fn is_high_intensity(self) -> bool {
        matches!(
            self,
            IntensityZone::VO2max | IntensityZone::RacePace | IntensityZone::Supramaximal
        )
    }
}

impl Stage {
    pub fn next(self) -> Stage {
        match self {
            Stage::Ingest => Stage::Architect,
            Stage::Architect => Stage::Generator,
            Stage::Generator => Stage::Critic,
            Stage::Critic | Stage::Done => Stage::Done,
        }
    }
}

/// One rule violation inside a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Violation {
    pub rule_id: RuleId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CriticVerdict {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Empty iff `passed`.
    pub critic_rejection_reason: String,
    pub iteration_count: u32,
}

impl CriticVerdict {
    /// The verdict a fresh draft carries before the critic has seen it.
    pub fn pending() -> Self {
        CriticVerdict::default()
    }

    pub fn from_violations(violations: Vec<Violation>, iteration_count: u32) -> Self {
        let critic_rejection_reason = violations
            .iter()
            .map(|v| format!("{}: {}", v.rule_id, v.reason))
            .collect::<Vec<_>>()
            .join("; ");
        CriticVerdict {
            passed: violations.is_empty(),
            violations,
            critic_rejection_reason,
            iteration_count,
        }
    }

    pub fn rule_ids(&self) -> Vec<RuleId> {
        self.violations.iter().map(|v| v.rule_id).collect()
    }
}

/// The 16-field question/context/answer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenTriplet {
    pub anchor_id: String,
    pub triplet_id: String,
    pub query: String,
    pub query_type: QueryType,
    pub persona: Persona,
    pub complexity_level: ComplexityLevel,
    pub context: String,
    pub expected_output: String,
    pub anchor_type: AnchorType,
    pub anchor_variables: Vec<String>,
    pub stroke_type: StrokeType,
    pub training_phase: TrainingPhase,
    pub data_category: DataCategory,
    pub source_documents: Vec<String>,
    pub critic_verdict: CriticVerdict,
    pub final_status: FinalStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceAnchor {
    pub anchor_id: String,
    pub anchor_type: AnchorType,
    pub anchor_variables: Vec<String>,
    pub data_category: DataCategory,
    pub stroke_type: StrokeType,
    pub training_phase: TrainingPhase,
    pub evidence_summary: String,
    pub source_documents: Vec<String>,
}

/// Identity used for anchor deduplication.
pub type AnchorKey = (AnchorType, Vec<String>, StrokeType, TrainingPhase);

impl PerformanceAnchor {
    pub fn dedup_key(&self) -> AnchorKey {
        let mut vars = self.anchor_variables.clone();
        vars.sort();
        (self.anchor_type, vars, self.stroke_type, self.training_phase)
    }

    /// Variable names that are not in the known-variable registry.
    pub fn unknown_variables(&self) -> Vec<&str> {
        self.anchor_variables
            .iter()
            .filter(|v| variables::canonical(v).is_none())
            .map(String::as_str)
            .collect()
    }
}

/// Physiological state consulted by the critic. Every field is optional so
/// that a missing value can be reported by name when a rule needs it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AthleteStateRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatigue_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery_time_hr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_load_au: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vo2max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hrv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hrv_baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroke_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydration_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biomechanical_efficiency: Option<f64>,
}

pub(crate) fn need(value: Option<f64>, field: &str) -> Result<f64> {
    value.ok_or_else(|| Error::MissingField(field.to_string()))
}

impl AthleteStateRecord {
    /// Range checks on the fields that are present.
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: Option<f64>, lo: f64, hi: f64| -> Result<()> {
            match v {
                Some(x) if !(x.is_finite() && x >= lo && x <= hi) => Err(Error::Schema(format!(
                    "{name} = {x} outside [{lo}, {hi}]"
                ))),
                _ => Ok(()),
            }
        };
        check("fatigue_score", self.fatigue_score, 0.0, 10.0)?;
        check("stroke_prob", self.stroke_prob, 0.0, 1.0)?;
        check("recovery_time_hr", self.recovery_time_hr, 0.0, f64::MAX)?;
        check("training_load_au", self.training_load_au, 0.0, f64::MAX)?;
        check("adaptation_pct", self.adaptation_pct, 0.0, f64::MAX)?;
        check("hydration_level", self.hydration_level, 0.0, f64::MAX)?;
        check(
            "biomechanical_efficiency",
            self.biomechanical_efficiency,
            0.0,
            f64::MAX,
        )?;
        for (name, v) in [
            ("vo2max", self.vo2max),
            ("hrv", self.hrv),
            ("hrv_baseline", self.hrv_baseline),
        ] {
            if let Some(x) = v {
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::Schema(format!("{name} = {x} must be > 0")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicFrame {
    pub sensor_id: u8,
    /// m/s², x/y/z.
    pub acc: [f64; 3],
    /// deg/s, x/y/z.
    pub gyro: [f64; 3],
    pub timestamp: f64,
    pub stroke_type: StrokeType,
}

impl KinematicFrame {
    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.sensor_id) {
            return Err(Error::Schema(format!(
                "sensor_id {} outside [1, 10]",
                self.sensor_id
            )));
        }
        if self.acc.iter().chain(&self.gyro).any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite IMU reading".into()));
        }
        Ok(())
    }

    pub fn acc_magnitude(&self) -> f64 {
        self.acc.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencedValue {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Machine-readable facts about a prescription, produced alongside the
/// free-text answer so the critic rules never have to parse prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescriptionAnnotation {
    pub intensity_zone: IntensityZone,
    pub volume_class: VolumeClass,
    pub is_high_intensity: bool,
    pub prescribes_drill: bool,
    #[serde(default)]
    pub drill_names: Vec<String>,
    #[serde(default)]
    pub targeted_segments: Vec<u8>,
    #[serde(default)]
    pub referenced_values: Vec<ReferencedValue>,
    #[serde(default)]
    pub recommends_deload: bool,
    #[serde(default)]
    pub acknowledges_adaptation_paradox: bool,
    /// Hours from now until the prescribed session starts, when stated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_start_offset_hr: Option<f64>,
    #[serde(default)]
    pub prescribes_novel_skill: bool,
    #[serde(default)]
    pub prescribes_rest_only: bool,
}

impl PrescriptionAnnotation {
    /// A low-intensity, no-drill baseline annotation for the given zone.
    pub fn for_zone(zone: IntensityZone, volume: VolumeClass) -> Self {
        PrescriptionAnnotation {
            intensity_zone: zone,
            volume_class: volume,
            is_high_intensity: zone.is_high_intensity(),
            prescribes_drill: false,
            drill_names: Vec::new(),
            targeted_segments: Vec::new(),
            referenced_values: Vec::new(),
            recommends_deload: false,
            acknowledges_adaptation_paradox: false,
            session_start_offset_hr: None,
            prescribes_novel_skill: false,
            prescribes_rest_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_high_intensity != self.intensity_zone.is_high_intensity() {
            return Err(Error::Schema(format!(
                "is_high_intensity={} disagrees with intensity_zone {}",
                self.is_high_intensity, self.intensity_zone
            )));
        }
        if let Some(s) = self.targeted_segments.iter().find(|s| !(1..=10).contains(*s)) {
            return Err(Error::Schema(format!("targeted segment {s} outside [1, 10]")));
        }
        Ok(())
    }
}

/// A draft as produced by the generator: the 16-field record plus its
/// prescription annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftTriplet {
    pub triplet: GoldenTriplet,
    pub annotation: PrescriptionAnnotation,
}

/// Sidecar line linking a triplet to its annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub triplet_id: String,
    pub annotation: PrescriptionAnnotation,
}

/// Checkpointable progress record for a whole pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineState {
    pub run_id: String,
    pub stage: Stage,
    pub processed_ids: Vec<String>,
    pub last_checkpoint_at: String,
    pub iteration_count: u32,
    pub critic_rejection_reason: String,
    pub final_status_counts: BTreeMap<FinalStatus, usize>,
}

impl PipelineState {
    pub fn new(run_id: impl Into<String>) -> Self {
        PipelineState {
            run_id: run_id.into(),
            stage: Stage::Ingest,
            processed_ids: Vec::new(),
            last_checkpoint_at: now_rfc3339(),
            iteration_count: 0,
            critic_rejection_reason: String::new(),
            final_status_counts: BTreeMap::new(),
        }
    }

    pub fn touch(&mut self) {
        self.last_checkpoint_at = now_rfc3339();
    }
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

//! Shared fixtures for unit tests.

use std::collections::BTreeMap;

use crate::critic::{AthleteContext, ChannelBaseline, KinematicContext, PopulationStats};
use crate::model::{
    AnchorType, AthleteStateRecord, ComplexityLevel, CriticVerdict, DataCategory, DraftTriplet,
    FinalStatus, GoldenTriplet, IntensityZone, Persona, PrescriptionAnnotation, QueryType,
    StrokeType, TrainingPhase, VolumeClass,
};

pub const SAMPLE_CONTEXT: &str = "\
Aerobic base sessions for trained swimmers typically sit near 62 ml/kg/min of oxygen uptake at steady effort.
— source: physiology_handbook.md";

/// A valid Base-phase draft record with a low-intensity answer.
pub fn sample_triplet(id: &str) -> GoldenTriplet {
    GoldenTriplet {
        anchor_id: "A000".into(),
        triplet_id: id.into(),
        query: "How should aerobic base work be set for this swimmer?".into(),
        query_type: QueryType::Reasoning,
        persona: Persona::EliteCoach,
        complexity_level: ComplexityLevel::Medium,
        context: SAMPLE_CONTEXT.into(),
        expected_output: "Hold an easy aerobic effort throughout. Keep volume moderate.".into(),
        anchor_type: AnchorType::LoadPerformance,
        anchor_variables: vec!["training_load_au".into(), "split_time_s".into()],
        stroke_type: StrokeType::Freestyle,
        training_phase: TrainingPhase::Base,
        data_category: DataCategory::Performance,
        source_documents: vec!["physiology_handbook.md".into()],
        critic_verdict: CriticVerdict::pending(),
        final_status: FinalStatus::Draft,
    }
}

pub fn sample_draft(id: &str) -> DraftTriplet {
    DraftTriplet {
        triplet: sample_triplet(id),
        annotation: PrescriptionAnnotation::for_zone(IntensityZone::EasyAerobic, VolumeClass::Moderate),
    }
}

/// An athlete against whom the sample draft violates nothing.
pub fn clean_context() -> AthleteContext {
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
            baselines: (1..=10u8)
                .map(|s| (s, ChannelBaseline { mean: 10.0, std: 1.0 }))
                .collect::<BTreeMap<_, _>>(),
        },
        population: PopulationStats {
            vo2max_tertiles: Some((50.0, 58.0)),
            adaptation_elevated_at: Some(5.0),
        },
    }
}

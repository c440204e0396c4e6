//! The rejection rules.
//!
//! Every rule is evaluated on every draft; a verdict lists all violations in
//! rule order. A rule that needs a physiological field the context does not
//! have fails evaluation with `Error::MissingField` naming that field.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grounding::check_grounding;
use super::lexicon;
use crate::error::{Error, Result};
use crate::model::{
    need, AthleteStateRecord, B1Direction, CriticVerdict, DraftTriplet, IntensityZone,
    KinematicFrame, PrescriptionAnnotation, RuleId, ThresholdConfig, TrainingPhase, Violation,
    VolumeClass,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBaseline {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicContext {
    pub frames: Vec<KinematicFrame>,
    /// Population baseline of acceleration magnitude per sensor.
    pub baselines: BTreeMap<u8, ChannelBaseline>,
}

impl KinematicContext {
    /// z-score of the athlete's mean acceleration magnitude for a sensor.
    pub fn segment_z(&self, sensor: u8) -> Result<f64> {
        let base = self
            .baselines
            .get(&sensor)
            .ok_or_else(|| Error::MissingField(format!("kinematics.baseline.imu{sensor}")))?;
        let mags: Vec<f64> = self
            .frames
            .iter()
            .filter(|f| f.sensor_id == sensor)
            .map(KinematicFrame::acc_magnitude)
            .collect();
        if mags.is_empty() {
            return Err(Error::MissingField(format!("kinematics.frames.imu{sensor}")));
        }
        if base.std <= 0.0 {
            return Err(Error::Precondition(format!(
                "baseline for imu{sensor} has no spread"
            )));
        }
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        Ok((mean - base.mean) / base.std)
    }
}

/// Population statistics some rules compare against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    /// (first, second) tertile cut points of VO2max.
    pub vo2max_tertiles: Option<(f64, f64)>,
    /// adaptation_pct at the configured "elevated" percentile.
    pub adaptation_elevated_at: Option<f64>,
}

/// Everything about the athlete side, resolved once per triplet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AthleteContext {
    pub athlete: AthleteStateRecord,
    pub kinematics: KinematicContext,
    pub population: PopulationStats,
}

/// Inputs to rule evaluation for one draft.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleContext {
    pub athlete: AthleteStateRecord,
    pub kinematics: KinematicContext,
    pub population: PopulationStats,
    pub phase: TrainingPhase,
    pub annotation: PrescriptionAnnotation,
    pub context_text: String,
    pub answer_text: String,
    pub thresholds: ThresholdConfig,
}

impl RuleContext {
    pub fn assemble(draft: &DraftTriplet, ctx: &AthleteContext, thresholds: &ThresholdConfig) -> Self {
        RuleContext {
            athlete: ctx.athlete.clone(),
            kinematics: ctx.kinematics.clone(),
            population: ctx.population.clone(),
            phase: draft.triplet.training_phase,
            annotation: draft.annotation.clone(),
            context_text: draft.triplet.context.clone(),
            answer_text: draft.triplet.expected_output.clone(),
            thresholds: thresholds.clone(),
        }
    }
}

fn violation(rule_id: RuleId, reason: String) -> Violation {
    Violation { rule_id, reason }
}

/// Rule outcome: `Ok(None)` passes, `Ok(Some(reason))` rejects.
type Outcome = Result<Option<String>>;

fn f1(rc: &RuleContext) -> Outcome {
    let a = &rc.annotation;
    if !a.is_high_intensity {
        return Ok(None);
    }
    let fatigue = need(rc.athlete.fatigue_score, "fatigue_score")?;
    Ok((fatigue > rc.thresholds.fatigue_high).then(|| {
        format!(
            "{} prescribed while fatigue_score is {fatigue} (above {})",
            a.intensity_zone, rc.thresholds.fatigue_high
        )
    }))
}

fn f2(rc: &RuleContext) -> Outcome {
    let Some(offset) = rc.annotation.session_start_offset_hr else {
        return Ok(None);
    };
    let recovery = need(rc.athlete.recovery_time_hr, "recovery_time_hr")?;
    Ok((offset < recovery).then(|| {
        format!("session starts {offset} h out but recovery_time_hr is {recovery}")
    }))
}

fn f3(rc: &RuleContext) -> Outcome {
    let a = &rc.annotation;
    if !a.prescribes_rest_only || a.acknowledges_adaptation_paradox {
        return Ok(None);
    }
    let fatigue = need(rc.athlete.fatigue_score, "fatigue_score")?;
    let adaptation = need(rc.athlete.adaptation_pct, "adaptation_pct")?;
    let elevated = rc
        .population
        .adaptation_elevated_at
        .ok_or_else(|| Error::MissingField("population.adaptation_elevated_at".into()))?;
    Ok((fatigue > rc.thresholds.fatigue_high && adaptation >= elevated).then(|| {
        format!(
            "rest-only prescription with fatigue_score {fatigue} and adaptation_pct {adaptation} \
             (elevated at {elevated}) without acknowledging the adaptation paradox"
        )
    }))
}

fn i1(rc: &RuleContext) -> Outcome {
    let zone = rc.annotation.intensity_zone;
    let bands = rc.thresholds.zone_bands;
    let always_ok = [bands.low, bands.mid, bands.high]
        .iter()
        .all(|b| b.permits(zone));
    if always_ok {
        return Ok(None);
    }
    let vo2 = need(rc.athlete.vo2max, "vo2max")?;
    let (q1, q2) = rc
        .population
        .vo2max_tertiles
        .ok_or_else(|| Error::MissingField("population.vo2max_tertiles".into()))?;
    let (band, name) = if vo2 <= q1 {
        (bands.low, "lower")
    } else if vo2 <= q2 {
        (bands.mid, "middle")
    } else {
        (bands.high, "upper")
    };
    Ok((!band.permits(zone)).then(|| {
        format!(
            "{zone} is outside the {}..{} band for the {name} VO2max tertile (vo2max {vo2})",
            band.lowest, band.highest
        )
    }))
}

fn i2(rc: &RuleContext) -> Outcome {
    let a = &rc.annotation;
    if a.recommends_deload || a.prescribes_rest_only {
        return Ok(None);
    }
    let load = need(rc.athlete.training_load_au, "training_load_au")?;
    Ok((load > rc.thresholds.load_safe_max_au).then(|| {
        format!(
            "training_load_au {load} exceeds {} and no deload is recommended",
            rc.thresholds.load_safe_max_au
        )
    }))
}

fn i3(rc: &RuleContext) -> Outcome {
    if !rc.annotation.is_high_intensity {
        return Ok(None);
    }
    let hrv = need(rc.athlete.hrv, "hrv")?;
    let baseline = need(rc.athlete.hrv_baseline, "hrv_baseline")?;
    let pct = rc.thresholds.hrv_suppression_pct;
    // Compared without division so the exact boundary stays on the passing side.
    Ok((hrv * 100.0 < baseline * (100.0 - pct)).then(|| {
        format!("high intensity with hrv {hrv} more than {pct}% below baseline {baseline}")
    }))
}

fn p1(rc: &RuleContext) -> Outcome {
    let a = &rc.annotation;
    if rc.phase != TrainingPhase::Taper {
        return Ok(None);
    }
    Ok(if a.volume_class == VolumeClass::High {
        Some("high volume prescribed during Taper".into())
    } else if a.prescribes_novel_skill {
        Some("novel skill introduced during Taper".into())
    } else {
        None
    })
}

fn p2(rc: &RuleContext) -> Outcome {
    let z = rc.annotation.intensity_zone;
    Ok((rc.phase == TrainingPhase::Base
        && matches!(z, IntensityZone::RacePace | IntensityZone::Supramaximal))
    .then(|| format!("{z} prescribed during Base")))
}

fn p3(rc: &RuleContext) -> Outcome {
    let z = rc.annotation.intensity_zone;
    Ok((rc.phase == TrainingPhase::Recovery && z > IntensityZone::EasyAerobic)
        .then(|| format!("{z} work prescribed during Recovery")))
}

fn b1(rc: &RuleContext) -> Outcome {
    if !rc.annotation.prescribes_drill {
        return Ok(None);
    }
    let p = need(rc.athlete.stroke_prob, "stroke_prob")?;
    let t = rc.thresholds.stroke_prob_low;
    let fires = match rc.thresholds.b1_direction {
        B1Direction::RejectBelow => p < t,
        B1Direction::RejectAbove => p > t,
    };
    Ok(fires.then(|| format!("drill prescribed with stroke_prob {p} (threshold {t})")))
}

fn b2(rc: &RuleContext) -> Outcome {
    let a = &rc.annotation;
    if !a.prescribes_drill {
        return Ok(None);
    }
    let mut normal = Vec::new();
    for &s in &a.targeted_segments {
        let z = rc.kinematics.segment_z(s)?;
        if z.abs() < rc.thresholds.b2_z_threshold {
            normal.push(format!("imu{s} (z = {z:.2})"));
        }
    }
    Ok((!normal.is_empty()).then(|| {
        format!(
            "drill targets segments within the normal range: {}",
            normal.join(", ")
        )
    }))
}

fn l1(rc: &RuleContext) -> Outcome {
    Ok(lexicon::find_contradiction(&rc.answer_text)
        .or_else(|| lexicon::find_laundering(&rc.answer_text, &rc.annotation)))
}

fn l2(rc: &RuleContext) -> Outcome {
    let v = check_grounding(
        &rc.answer_text,
        &rc.context_text,
        rc.thresholds.grounding_numeric_rel_tol,
        true,
    );
    Ok((!v.is_empty()).then(|| {
        let refs: Vec<String> = v.iter().map(|g| format!("\"{}\"", g.value)).collect();
        format!("not found in context: {}", refs.join(", "))
    }))
}

type RuleFn = fn(&RuleContext) -> Outcome;

pub(crate) const RULES: [(RuleId, RuleFn); 13] = [
    (RuleId::F1, f1),
    (RuleId::F2, f2),
    (RuleId::F3, f3),
    (RuleId::I1, i1),
    (RuleId::I2, i2),
    (RuleId::I3, i3),
    (RuleId::P1, p1),
    (RuleId::P2, p2),
    (RuleId::P3, p3),
    (RuleId::B1, b1),
    (RuleId::B2, b2),
    (RuleId::L1, l1),
    (RuleId::L2, l2),
];

/// Run every rule except those in `skip`.
pub(crate) fn evaluate_rules(rc: &RuleContext, skip: &[RuleId]) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    for (id, rule) in RULES {
        if skip.contains(&id) {
            continue;
        }
        if let Some(reason) = rule(rc)? {
            out.push(violation(id, reason));
        }
    }
    Ok(out)
}

/// Evaluate all rules against a draft with the lexicon-based L1 check.
pub fn evaluate(draft: &DraftTriplet, rc: &RuleContext) -> Result<CriticVerdict> {
    let violations = evaluate_rules(rc, &[])?;
    Ok(CriticVerdict::from_violations(
        violations,
        draft.triplet.critic_verdict.iteration_count,
    ))
}

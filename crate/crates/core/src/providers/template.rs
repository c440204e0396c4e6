//! Deterministic offline provider.
//!
//! Answers are composed from the JSON payload embedded in each prompt, so a
//! full pipeline run needs no network and always produces the same corpus.
//! With `plant_faults` enabled, two kinds of defect are injected so the
//! critic loop has something to catch:
//!
//! * Taper plans for a physiotherapist's reasoning question come out at high
//!   volume (a periodization fault that one regeneration fixes);
//! * Peak plans for a novice's simple question cite a VO2max figure that is
//!   in no source (a grounding fault the regenerator keeps reproducing, so
//!   the record ends up with a human reviewer).

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AgentRole, CompletionProvider, CompletionRequest, ProviderError};
use crate::critic::{grounding, lexicon};
use crate::model::{
    variables, IntensityZone, Persona, PrescriptionAnnotation, QueryType, RuleId,
    TrainingPhase, VolumeClass,
};
use crate::prompts::{self, ArchitectInput, CriticInput, GeneratorInput, RegeneratorInput};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    pub plant_faults: bool,
}

pub struct TemplateProvider {
    cfg: TemplateConfig,
}

impl TemplateProvider {
    pub fn new(cfg: TemplateConfig) -> Self {
        TemplateProvider { cfg }
    }
}

fn bad_prompt(role: AgentRole) -> ProviderError {
    ProviderError::Config(format!("{role} prompt carries no readable input payload"))
}

impl CompletionProvider for TemplateProvider {
    fn complete_raw(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let p = &req.user_prompt;
        let out = match req.role {
            AgentRole::Architect => {
                architect(&prompts::extract(p).ok_or_else(|| bad_prompt(req.role))?)
            }
            AgentRole::Generator => {
                self.generate(&prompts::extract(p).ok_or_else(|| bad_prompt(req.role))?)
            }
            AgentRole::Critic => {
                let input: CriticInput = prompts::extract(p).ok_or_else(|| bad_prompt(req.role))?;
                match lexicon::find_contradiction(&input.answer) {
                    Some(c) => json!({"contradictory": true, "explanation": c}),
                    None => json!({"contradictory": false, "explanation": ""}),
                }
            }
            AgentRole::Regenerator => {
                self.regenerate(&prompts::extract(p).ok_or_else(|| bad_prompt(req.role))?)
            }
        };
        Ok(out.to_string())
    }
}

fn architect(input: &ArchitectInput) -> serde_json::Value {
    let mut seen: Vec<String> = Vec::new();
    for tok in input
        .data_digest
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
    {
        if let Some(v) = variables::canonical(tok) {
            if v == tok && !seen.contains(&v) {
                seen.push(v);
            }
        }
    }
    let t = input.anchor_type;
    let pick = |pred: &dyn Fn(&str) -> bool| {
        input
            .target_variables
            .iter()
            .find(|v| seen.contains(v) && pred(v))
            .or_else(|| seen.iter().find(|v| pred(v)))
            .cloned()
    };
    let primary = pick(&|v| variables::is_primary(t, v));
    let partner = pick(&|v| variables::is_partner(t, v));
    let (Some(primary), Some(partner)) = (primary, partner) else {
        return json!({"anchor": null});
    };
    json!({"anchor": {
        "anchor_type": t,
        "anchor_variables": [primary, partner],
        "stroke_type": input.stroke_type,
        "training_phase": input.training_phase,
        "evidence_summary": format!(
            "The {} {} digest reports both {primary} and {partner}; they are proposed together as a {} pattern.",
            input.stroke_type, input.training_phase, t.label()
        ),
    }})
}

fn base_plan(phase: TrainingPhase) -> (IntensityZone, VolumeClass) {
    match phase {
        TrainingPhase::Base => (IntensityZone::EasyAerobic, VolumeClass::Moderate),
        TrainingPhase::Build => (IntensityZone::Threshold, VolumeClass::Moderate),
        TrainingPhase::Peak => (IntensityZone::RacePace, VolumeClass::Low),
        TrainingPhase::Taper => (IntensityZone::Threshold, VolumeClass::Low),
        TrainingPhase::Recovery => (IntensityZone::Recovery, VolumeClass::Low),
        TrainingPhase::General => (IntensityZone::EasyAerobic, VolumeClass::Moderate),
    }
}

fn set_zone(a: &mut PrescriptionAnnotation, zone: IntensityZone) {
    a.intensity_zone = zone;
    a.is_high_intensity = zone.is_high_intensity();
}

/// First context sentence carrying a number, else the first sentence.
fn evidence_sentence(context: &str) -> Option<String> {
    let sentences: Vec<&str> = context
        .lines()
        .filter(|l| !l.trim_start().starts_with("— source:") && !l.trim().is_empty())
        .flat_map(|l| l.split_inclusive(". "))
        .map(str::trim)
        .filter(|s| s.len() > 20 && !s.contains('"'))
        .collect();
    sentences
        .iter()
        .find(|s| s.chars().any(|c| c.is_ascii_digit()))
        .or(sentences.first())
        .map(|s| s.to_string())
}

fn opener(persona: Persona) -> &'static str {
    match persona {
        Persona::EliteCoach => "For planning the next block, the evidence points one way.",
        Persona::NoviceSwimmer => "Here is what this means for your own swimming.",
        Persona::BiometricAnalyst => "Reading the sensor and physiological record together gives a clear picture.",
        Persona::SportsScientist => "The available data support a cautious interpretation.",
        Persona::Physiotherapist => "From a load-management and injury-risk perspective, the plan should be conservative.",
    }
}

fn zone_directive(zone: IntensityZone) -> &'static str {
    match zone {
        IntensityZone::Recovery => "Keep the session to recovery swimming only.",
        IntensityZone::EasyAerobic => "Hold an easy aerobic effort throughout.",
        IntensityZone::Threshold => "Work at threshold effort on the main set.",
        IntensityZone::VO2max => "Include VO2max-intensity repeats in the main set.",
        IntensityZone::RacePace => "Include race pace efforts in the main set.",
        IntensityZone::Supramaximal => "Finish with supramaximal sprint efforts.",
    }
}

fn volume_directive(v: VolumeClass) -> &'static str {
    match v {
        VolumeClass::Low => "Keep total volume low.",
        VolumeClass::Moderate => "Keep volume moderate.",
        VolumeClass::High => "Extend the session to a high total volume.",
    }
}

const PLANTED_UNGROUNDED: &str = "Your VO2max of 99.9 ml/kg/min supports this plan.";

fn compose_answer(
    persona: Persona,
    context: &str,
    a: &PrescriptionAnnotation,
    planted_ungrounded: bool,
) -> String {
    let mut parts = vec![opener(persona).to_string()];
    if let Some(s) = evidence_sentence(context) {
        parts.push(format!("The source material notes: \"{s}\""));
    }
    parts.push(zone_directive(a.intensity_zone).into());
    parts.push(volume_directive(a.volume_class).into());
    if a.prescribes_drill {
        for name in &a.drill_names {
            parts.push(format!("Add the {name} to target the flagged body segment."));
        }
    }
    if a.session_start_offset_hr.is_some() {
        parts.push("Schedule the next session after one full day of rest.".into());
    }
    if a.recommends_deload {
        parts.push("Plan a deload before adding further load.".into());
    }
    if a.acknowledges_adaptation_paradox {
        parts.push(
            "Strong adaptation alongside high fatigue is a known paradox, so monitor it rather than prescribing rest alone."
                .into(),
        );
    }
    if planted_ungrounded {
        parts.push(PLANTED_UNGROUNDED.into());
    }
    parts.join(" ")
}

fn query_text(input: &GeneratorInput) -> String {
    let a = &input.anchor;
    let vars = a.anchor_variables.join(" and ");
    let who = match input.persona {
        Persona::EliteCoach => "As a coach preparing",
        Persona::NoviceSwimmer => "As a newer swimmer training",
        Persona::BiometricAnalyst => "Looking at monitoring data for swimmers",
        Persona::SportsScientist => "From a research standpoint, for swimmers",
        Persona::Physiotherapist => "As a physiotherapist supporting swimmers",
    };
    let ask = match input.query_type {
        QueryType::Simple => format!("what does {vars} tell me about the session plan"),
        QueryType::Reasoning => format!(
            "how should the relationship between {vars} change the training prescription"
        ),
        QueryType::Multimodal => format!(
            "how should I combine the {vars} signals with the sensor data when adjusting technique and load"
        ),
    };
    let variant = match input.repeat_index {
        0 => String::new(),
        n => format!(" (follow-up {})", roman(n)),
    };
    format!(
        "{who} {} in the {} phase, {ask}?{variant}",
        a.stroke_type.label().to_lowercase(),
        a.training_phase.label().to_lowercase()
    )
}

fn roman(n: u32) -> String {
    const TABLE: [(u32, &str); 7] = [
        (100, "c"),
        (90, "xc"),
        (50, "l"),
        (40, "xl"),
        (10, "x"),
        (9, "ix"),
        (5, "v"),
    ];
    let mut n = n;
    let mut s = String::new();
    for (v, r) in TABLE {
        while n >= v {
            s.push_str(r);
            n -= v;
        }
    }
    s.push_str(["", "i", "ii", "iii", "iv"][n as usize]);
    s
}

fn plants_taper_fault(persona: Persona, qt: QueryType, phase: TrainingPhase) -> bool {
    phase == TrainingPhase::Taper && persona == Persona::Physiotherapist && qt == QueryType::Reasoning
}

fn plants_grounding_fault(persona: Persona, qt: QueryType, phase: TrainingPhase) -> bool {
    phase == TrainingPhase::Peak && persona == Persona::NoviceSwimmer && qt == QueryType::Simple
}

impl TemplateProvider {
    fn generate(&self, input: &GeneratorInput) -> serde_json::Value {
        let a = &input.anchor;
        let phase = a.training_phase;
        let (zone, volume) = base_plan(phase);
        let mut ann = PrescriptionAnnotation::for_zone(zone, volume);
        if phase == TrainingPhase::Recovery {
            ann.session_start_offset_hr = Some(24.0);
        }
        let segments: Vec<u8> = a
            .anchor_variables
            .iter()
            .filter_map(|v| variables::parse_imu(v).map(|(s, _, _)| s))
            .collect();
        if !segments.is_empty() {
            if let Some(name) = grounding::extract_names(&input.context)
                .into_iter()
                .find(|n| n.kind == grounding::NameKind::Drill)
            {
                ann.prescribes_drill = true;
                ann.drill_names = vec![name.text];
                ann.targeted_segments = segments;
            }
        }
        let faults = self.cfg.plant_faults;
        if faults && plants_taper_fault(input.persona, input.query_type, phase) {
            ann.volume_class = VolumeClass::High;
        }
        let planted = faults && plants_grounding_fault(input.persona, input.query_type, phase);
        json!({
            "query": query_text(input),
            "expected_output": compose_answer(input.persona, &input.context, &ann, planted),
            "annotation": ann,
        })
    }

    fn regenerate(&self, input: &RegeneratorInput) -> serde_json::Value {
        let mut ann = input.annotation.clone();
        for v in &input.violations {
            match v.rule_id {
                RuleId::F1 | RuleId::I3 => set_zone(&mut ann, IntensityZone::EasyAerobic),
                RuleId::I1 | RuleId::P2 => {
                    if ann.intensity_zone > IntensityZone::Threshold {
                        set_zone(&mut ann, IntensityZone::Threshold)
                    }
                }
                RuleId::P3 => set_zone(&mut ann, IntensityZone::EasyAerobic),
                RuleId::F2 => ann.session_start_offset_hr = None,
                RuleId::F3 => ann.acknowledges_adaptation_paradox = true,
                RuleId::I2 => ann.recommends_deload = true,
                RuleId::P1 => {
                    ann.volume_class = VolumeClass::Low;
                    ann.prescribes_novel_skill = false;
                }
                RuleId::B1 | RuleId::B2 => {
                    ann.prescribes_drill = false;
                    ann.drill_names.clear();
                    ann.targeted_segments.clear();
                }
                RuleId::L1 | RuleId::L2 => {}
            }
        }
        let planted = self.cfg.plant_faults
            && plants_grounding_fault(input.persona, input.query_type, input.training_phase);
        json!({
            "expected_output": compose_answer(input.persona, &input.context, &ann, planted),
            "annotation": ann,
            "query": input.query,
        })
    }
}

//! Prompt construction.
//!
//! Every user prompt ends with a JSON payload under an `### INPUT` heading.
//! Keeping the payload machine-readable lets the offline template provider
//! answer from the same prompts a remote model sees.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::model::{
    AnchorType, ComplexityLevel, PerformanceAnchor, Persona, PrescriptionAnnotation, QueryType,
    StrokeType, TrainingPhase, Violation,
};

pub const INPUT_HEADING: &str = "### INPUT";

pub const ARCHITECT_SYSTEM: &str = "\
You are the Architect agent of a swimming-science data synthesis pipeline. \
Given a seed (anchor type, stroke, training phase) and a statistical digest of \
athlete data for that stratum, propose one performance anchor: a pattern linking \
a physiological or performance variable to a partner variable. Only use variable \
names that appear in the digest. Describe the observed condition without claiming \
a cause. Reply with JSON only: {\"anchor\": {\"anchor_type\", \"anchor_variables\", \
\"data_category\", \"stroke_type\", \"training_phase\", \"evidence_summary\"}} or \
{\"anchor\": null} when the digest shows no usable pattern.";

pub const GENERATOR_SYSTEM: &str = "\
You are the Generator agent. Write one question a member of the given persona would \
ask about the anchor, and an answer grounded strictly in the provided context. Every \
number and every named drill or protocol in the answer must appear in the context. \
Reply with JSON only: {\"query\", \"expected_output\", \"annotation\"} where annotation \
describes the prescription: intensity_zone, volume_class, is_high_intensity, \
prescribes_drill, drill_names, targeted_segments, referenced_values, recommends_deload, \
acknowledges_adaptation_paradox, session_start_offset_hr, prescribes_novel_skill, \
prescribes_rest_only.";

pub const CRITIC_SYSTEM: &str = "\
You are the Critic agent. Decide whether the answer contains directives that \
contradict each other. Reply with JSON only: {\"contradictory\": bool, \"explanation\": string}.";

pub const REGENERATOR_SYSTEM: &str = "\
You revise a coaching answer that failed validation. Keep the query unchanged, fix \
every listed violation, and stay grounded in the context. Reply with JSON only: \
{\"expected_output\", \"annotation\", \"query\"} where query echoes the original.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectInput {
    pub seed_id: String,
    pub seed_kind: String,
    pub anchor_type: AnchorType,
    pub stroke_type: StrokeType,
    pub training_phase: TrainingPhase,
    pub complexity_level: ComplexityLevel,
    pub target_variables: Vec<String>,
    pub data_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInput {
    pub triplet_id: String,
    pub persona: Persona,
    pub query_type: QueryType,
    pub complexity_level: ComplexityLevel,
    pub repeat_index: u32,
    pub anchor: PerformanceAnchor,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticInput {
    pub answer: String,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegeneratorInput {
    pub triplet_id: String,
    pub cycle: u32,
    pub persona: Persona,
    pub query_type: QueryType,
    pub stroke_type: StrokeType,
    pub training_phase: TrainingPhase,
    pub anchor_variables: Vec<String>,
    pub query: String,
    pub context: String,
    pub expected_output: String,
    pub annotation: PrescriptionAnnotation,
    pub violations: Vec<Violation>,
}

/// Instructions followed by the JSON payload.
pub fn render<T: Serialize>(instructions: &str, payload: &T) -> String {
    let json = serde_json::to_string_pretty(payload).expect("payloads always serialize");
    format!("{instructions}\n\n{INPUT_HEADING}\n```json\n{json}\n```\n")
}

/// Recover the payload from a rendered prompt.
pub fn extract<T: DeserializeOwned>(prompt: &str) -> Option<T> {
    let start = prompt.find(INPUT_HEADING)?;
    let rest = &prompt[start + INPUT_HEADING.len()..];
    let body = rest.split_once("```json\n")?.1;
    let end = body.find("\n```")?;
    serde_json::from_str(&body[..end]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_round_trip_survives_appended_text() {
        let input = CriticInput {
            answer: "a ``` b".into(),
            context: "line\nline".into(),
        };
        let mut prompt = render("Judge.", &input);
        prompt.push_str("\n\nFormat reminder (attempt 1): ...");
        assert_eq!(extract::<CriticInput>(&prompt), Some(input));
        assert_eq!(extract::<CriticInput>("no payload"), None);
    }
}

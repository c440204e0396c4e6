//! Physiological soundness validation.
//!
//! Each draft is checked against thirteen rules. A rejected draft goes back
//! to the provider with its rejection reasons and is re-checked, up to the
//! configured ceiling; drafts still failing then wait for a human reviewer.

pub mod grounding;
pub mod lexicon;
mod resolver;
mod rules;
mod run;

pub use grounding::{check_grounding, GroundingViolation, ReferenceKind};
pub use resolver::{ContextResolver, FixedResolver, TableResolver};
pub use rules::{
    evaluate, AthleteContext, ChannelBaseline, KinematicContext, PopulationStats, RuleContext,
};
pub use run::{run_validation, CriticCheckpoint, ValidationOptions, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CriticVerdict, DraftTriplet, RuleId, ThresholdConfig, Violation};
use crate::prompts::{self, CriticInput, RegeneratorInput};
use crate::providers::{
    complete, AgentRole, CompletionProvider, CompletionRequest, CriticJudgment, ResponseSchema,
    RevisedOutput,
};

/// How the contradiction rule is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum L1Mode {
    /// Opposing-directive lexicon.
    #[default]
    Lexicon,
    /// Provider judgment, plus the lexicon's annotation-consistency check.
    Provider,
}

pub struct Critic<'a> {
    pub thresholds: ThresholdConfig,
    pub provider: &'a dyn CompletionProvider,
    pub l1_mode: L1Mode,
    pub format_retries: u32,
}

impl<'a> Critic<'a> {
    pub fn new(thresholds: ThresholdConfig, provider: &'a dyn CompletionProvider) -> Self {
        Critic {
            thresholds,
            provider,
            l1_mode: L1Mode::Lexicon,
            format_retries: 2,
        }
    }

    /// Evaluate a draft under this critic's L1 mode.
    pub fn judge(&self, draft: &DraftTriplet, ctx: &AthleteContext) -> Result<CriticVerdict> {
        let rc = RuleContext::assemble(draft, ctx, &self.thresholds);
        let ic = draft.triplet.critic_verdict.iteration_count;
        match self.l1_mode {
            L1Mode::Lexicon => evaluate(draft, &rc),
            L1Mode::Provider => {
                let mut violations = rules::evaluate_rules(&rc, &[RuleId::L1])?;
                if let Some(reason) = self.provider_l1(&rc)? {
                    let at = violations
                        .iter()
                        .position(|v| v.rule_id > RuleId::L1)
                        .unwrap_or(violations.len());
                    violations.insert(
                        at,
                        Violation {
                            rule_id: RuleId::L1,
                            reason,
                        },
                    );
                }
                Ok(CriticVerdict::from_violations(violations, ic))
            }
        }
    }

    fn provider_l1(&self, rc: &RuleContext) -> Result<Option<String>> {
        let input = CriticInput {
            answer: rc.answer_text.clone(),
            context: rc.context_text.clone(),
        };
        let req = CompletionRequest::new(
            AgentRole::Critic,
            ResponseSchema::CriticJudgment,
            prompts::CRITIC_SYSTEM,
            prompts::render("Judge whether the answer contradicts itself.", &input),
        );
        let j = complete::<CriticJudgment>(self.provider, &req, self.format_retries)?.value;
        if j.contradictory {
            let why = if j.explanation.trim().is_empty() {
                "the answer contradicts itself".to_string()
            } else {
                j.explanation
            };
            return Ok(Some(why));
        }
        Ok(lexicon::find_laundering(&rc.answer_text, &rc.annotation))
    }

    /// Ask the provider for a corrected answer. Only `expected_output` and the
    /// annotation may change; the returned draft's iteration count is one
    /// higher.
    pub fn regenerate(&self, draft: &DraftTriplet, verdict: &CriticVerdict) -> Result<DraftTriplet> {
        if verdict.passed {
            return Err(Error::Precondition("regenerate called on a passing draft".into()));
        }
        if verdict.iteration_count >= self.thresholds.max_regeneration_cycles {
            return Err(Error::Precondition(format!(
                "iteration ceiling {} reached",
                self.thresholds.max_regeneration_cycles
            )));
        }
        let t = &draft.triplet;
        let input = RegeneratorInput {
            triplet_id: t.triplet_id.clone(),
            cycle: verdict.iteration_count + 1,
            persona: t.persona,
            query_type: t.query_type,
            stroke_type: t.stroke_type,
            training_phase: t.training_phase,
            anchor_variables: t.anchor_variables.clone(),
            query: t.query.clone(),
            context: t.context.clone(),
            expected_output: t.expected_output.clone(),
            annotation: draft.annotation.clone(),
            violations: verdict.violations.clone(),
        };
        let instructions = format!(
            "The answer below was rejected. Rejection reason: {}\nRevise it.",
            verdict.critic_rejection_reason
        );
        let req = CompletionRequest::new(
            AgentRole::Regenerator,
            ResponseSchema::RevisedOutput,
            prompts::REGENERATOR_SYSTEM,
            prompts::render(&instructions, &input),
        );
        let revised = complete::<RevisedOutput>(self.provider, &req, self.format_retries)?.value;
        if let Some(q) = &revised.query {
            if *q != t.query {
                return Err(Error::Contract(format!(
                    "{}: regeneration changed the query",
                    t.triplet_id
                )));
            }
        }
        let mut out = draft.clone();
        out.triplet.expected_output = revised.expected_output;
        out.annotation = revised.annotation;
        out.triplet.critic_verdict = CriticVerdict {
            iteration_count: verdict.iteration_count + 1,
            ..verdict.clone()
        };
        Ok(out)
    }
}

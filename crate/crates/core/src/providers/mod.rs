//! Completion providers for the three agents.
//!
//! Every provider returns raw text; [`complete`] parses it into a typed
//! response shape, re-prompting with a format reminder when the text does not
//! validate. Transport failures are retried inside the remote provider and
//! never count against the format-retry budget.

use std::path::PathBuf;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::model::{
    AnchorType, ComplexityLevel, DataCategory, PrescriptionAnnotation, StrokeType, TrainingPhase,
};

mod recording;
mod remote;
mod scripted;
pub mod template;

pub use recording::RecordingProvider;
pub use remote::{RemoteProvider, RemoteSettings};
pub use scripted::{fingerprint, Script, ScriptEntry, ScriptedProvider};
pub use template::{TemplateConfig, TemplateProvider};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("{schema:?} response invalid after {attempts} attempt(s): {message}")]
    Schema {
        schema: ResponseSchema,
        attempts: u32,
        message: String,
    },

    #[error("no scripted response for {role} request {fingerprint}")]
    ScriptMiss { role: AgentRole, fingerprint: String },

    #[error("provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Architect,
    Generator,
    Critic,
    Regenerator,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Architect,
        AgentRole::Generator,
        AgentRole::Critic,
        AgentRole::Regenerator,
    ];

    /// Default sampling temperature.
    pub fn default_temperature(self) -> f64 {
        match self {
            AgentRole::Architect => 0.3,
            AgentRole::Generator | AgentRole::Regenerator => 0.7,
            AgentRole::Critic => 0.0,
        }
    }
}

impl std::fmt::Display for AgentRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgentRole::Architect => "architect",
            AgentRole::Generator => "generator",
            AgentRole::Critic => "critic",
            AgentRole::Regenerator => "regenerator",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseSchema {
    AnchorDraft,
    TripletDraft,
    CriticJudgment,
    RevisedOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: AgentRole,
    pub system_prompt: String,
    pub user_prompt: String,
    pub response_schema: ResponseSchema,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(role: AgentRole, schema: ResponseSchema, system: &str, user: String) -> Self {
        CompletionRequest {
            role,
            system_prompt: system.to_string(),
            user_prompt: user,
            response_schema: schema,
            temperature: role.default_temperature(),
        }
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete_raw(&self, req: &CompletionRequest) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn complete_raw(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete_raw(req)
    }
}

/// A typed response the model must produce.
pub trait ResponseShape: DeserializeOwned {
    const SCHEMA: ResponseSchema;

    /// Semantic checks beyond JSON shape.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

/// Architect output: one anchor proposal, or none when the data show no
/// pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorDraft {
    pub anchor: Option<AnchorProposal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorProposal {
    pub anchor_type: AnchorType,
    pub anchor_variables: Vec<String>,
    #[serde(default)]
    pub data_category: Option<DataCategory>,
    #[serde(default)]
    pub stroke_type: Option<StrokeType>,
    #[serde(default)]
    pub training_phase: Option<TrainingPhase>,
    pub evidence_summary: String,
}

impl ResponseShape for AnchorDraft {
    const SCHEMA: ResponseSchema = ResponseSchema::AnchorDraft;

    fn check(&self) -> Result<(), String> {
        if let Some(a) = &self.anchor {
            if a.anchor_variables.is_empty() {
                return Err("anchor_variables must not be empty".into());
            }
            if a.evidence_summary.trim().is_empty() {
                return Err("evidence_summary must not be empty".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletDraft {
    pub query: String,
    pub expected_output: String,
    pub annotation: PrescriptionAnnotation,
    /// Ignored: complexity is always assigned deterministically.
    #[serde(default)]
    pub complexity_level: Option<ComplexityLevel>,
}

impl ResponseShape for TripletDraft {
    const SCHEMA: ResponseSchema = ResponseSchema::TripletDraft;

    fn check(&self) -> Result<(), String> {
        if self.query.trim().is_empty() || self.expected_output.trim().is_empty() {
            return Err("query and expected_output must be non-empty".into());
        }
        self.annotation.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticJudgment {
    pub contradictory: bool,
    #[serde(default)]
    pub explanation: String,
}

impl ResponseShape for CriticJudgment {
    const SCHEMA: ResponseSchema = ResponseSchema::CriticJudgment;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevisedOutput {
    pub expected_output: String,
    pub annotation: PrescriptionAnnotation,
    /// Echo of the query. When present it must equal the original.
    #[serde(default)]
    pub query: Option<String>,
}

impl ResponseShape for RevisedOutput {
    const SCHEMA: ResponseSchema = ResponseSchema::RevisedOutput;

    fn check(&self) -> Result<(), String> {
        if self.expected_output.trim().is_empty() {
            return Err("expected_output must be non-empty".into());
        }
        self.annotation.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion<T> {
    pub value: T,
    /// Re-prompts needed before the response validated.
    pub format_retries: u32,
}

/// Strip an optional markdown code fence around a JSON body.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn reminder(schema: ResponseSchema, attempt: u32, error: &str) -> String {
    format!(
        "\n\nFormat reminder (attempt {attempt}): the previous reply was rejected ({error}). \
         Reply with a single JSON object matching the {schema:?} shape and nothing else."
    )
}

/// Request a typed response, re-prompting up to `format_retries` times when
/// the reply does not parse or validate.
pub fn complete<T: ResponseShape>(
    provider: &dyn CompletionProvider,
    req: &CompletionRequest,
    format_retries: u32,
) -> Result<Completion<T>, ProviderError> {
    let mut current = req.clone();
    let mut last_error = String::new();
    for attempt in 0..=format_retries {
        if attempt > 0 {
            current.user_prompt = format!(
                "{}{}",
                req.user_prompt,
                reminder(T::SCHEMA, attempt, &last_error)
            );
        }
        let raw = provider.complete_raw(&current)?;
        let parsed = serde_json::from_str::<T>(unfence(&raw))
            .map_err(|e| e.to_string())
            .and_then(|v| v.check().map(|()| v));
        match parsed {
            Ok(value) => {
                return Ok(Completion {
                    value,
                    format_retries: attempt,
                })
            }
            Err(e) => {
                warn!(role = %req.role, attempt, error = %e, "response failed validation");
                last_error = e;
            }
        }
    }
    Err(ProviderError::Schema {
        schema: T::SCHEMA,
        attempts: format_retries + 1,
        message: last_error,
    })
}

/// How a role's provider is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum ProviderSettings {
    /// Deterministic offline responses composed from the prompt payload.
    Template(TemplateConfig),
    /// Replay of a recorded script.
    Scripted { script: PathBuf },
    Remote(RemoteSettings),
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings::Template(TemplateConfig::default())
    }
}

pub fn build_provider(settings: &ProviderSettings) -> crate::Result<Arc<dyn CompletionProvider>> {
    Ok(match settings {
        ProviderSettings::Template(cfg) => Arc::new(TemplateProvider::new(cfg.clone())),
        ProviderSettings::Scripted { script } => Arc::new(ScriptedProvider::from_file(script)?),
        ProviderSettings::Remote(r) => Arc::new(RemoteProvider::new(r.clone())?),
    })
}

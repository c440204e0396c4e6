//! Embedding providers.
//!
//! The offline embedder hashes lowercased word unigrams and bigrams into a
//! fixed number of signed buckets (FNV-1a, seeded) and L2-normalizes. It is
//! deterministic across platforms and needs no model files.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::error::{Error, Result};
use crate::providers::ProviderError;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EmbeddingMode {
    Remote,
    #[default]
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingProviderSpec {
    pub mode: EmbeddingMode,
    pub dimension: usize,
    pub seed: u64,
    pub model_name: Option<String>,
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for EmbeddingProviderSpec {
    fn default() -> Self {
        EmbeddingProviderSpec {
            mode: EmbeddingMode::Offline,
            dimension: DEFAULT_DIMENSION,
            seed: 0,
            model_name: None,
            endpoint: None,
            api_key_env: None,
            max_attempts: 3,
            timeout_secs: 60,
        }
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }
}

pub fn embedder_from_spec(spec: &EmbeddingProviderSpec) -> Result<Box<dyn Embedder>> {
    if spec.dimension == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    Ok(match spec.mode {
        EmbeddingMode::Offline => Box::new(HashingEmbedder::new(spec.dimension, spec.seed)),
        EmbeddingMode::Remote => Box::new(RemoteEmbedder::new(spec)?),
    })
}

/// Embed one text with a throwaway embedder built from `spec`.
pub fn embed(text: &str, spec: &EmbeddingProviderSpec) -> Result<Vec<f64>> {
    embedder_from_spec(spec)?.embed(text)
}

#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    seed: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub(crate) fn fnv1a_str(s: &str) -> u64 {
    fnv1a(0, s.as_bytes())
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl HashingEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashingEmbedder { dimension, seed }
    }

    fn bump(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(self.seed, feature.as_bytes());
        let idx = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[idx] += sign * weight;
    }

    fn vector(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::Precondition("cannot embed empty text".into()));
        }
        let ws = words(text);
        let mut v = vec![0.0; self.dimension];
        for w in &ws {
            self.bump(&mut v, w, 1.0);
        }
        for pair in ws.windows(2) {
            self.bump(&mut v, &format!("{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Punctuation-only text, or features that cancelled out.
            let h = fnv1a(self.seed, text.as_bytes());
            v[(h % self.dimension as u64) as usize] = 1.0;
            return Ok(v);
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.vector(t)).collect()
    }
}

/// HTTP embedding endpoint taking `{model, input: [..]}` and answering either
/// `{"vectors": [[..]]}` or `{"data": [{"embedding": [..]}]}`.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    dimension: usize,
    token: Option<String>,
    max_attempts: u32,
}

impl RemoteEmbedder {
    pub fn new(spec: &EmbeddingProviderSpec) -> Result<Self> {
        let endpoint = spec
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config("remote embedding needs an endpoint".into()))?;
        let token = match &spec.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(spec.timeout_secs))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(RemoteEmbedder {
            client,
            endpoint,
            model: spec.model_name.clone().unwrap_or_default(),
            dimension: spec.dimension,
            token,
            max_attempts: spec.max_attempts.max(1),
        })
    }

    fn call(&self, texts: &[&str]) -> std::result::Result<Value, String> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({"model": self.model, "input": texts}));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        resp.json::<Value>().map_err(|e| e.to_string())
    }

    fn parse(&self, body: &Value, expected: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
        let rows: Vec<&Value> = if let Some(v) = body.get("vectors").and_then(Value::as_array) {
            v.iter().collect()
        } else if let Some(d) = body.get("data").and_then(Value::as_array) {
            d.iter().filter_map(|e| e.get("embedding")).collect()
        } else {
            return Err("response has neither `vectors` nor `data`".into());
        };
        if rows.len() != expected {
            return Err(format!("expected {expected} vectors, got {}", rows.len()));
        }
        rows.into_iter()
            .map(|r| {
                let v: Vec<f64> = serde_json::from_value(r.clone()).map_err(|e| e.to_string())?;
                if v.len() != self.dimension {
                    return Err(format!(
                        "vector has dimension {}, expected {}",
                        v.len(),
                        self.dimension
                    ));
                }
                Ok(v)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::Precondition("cannot embed empty text".into()));
        }
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            match self.call(texts).and_then(|b| self.parse(&b, texts.len())) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    warn!(attempt, error = %e, "embedding request failed");
                    last = e;
                }
            }
        }
        Err(ProviderError::Transport {
            attempts: self.max_attempts,
            message: last,
        }
        .into())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

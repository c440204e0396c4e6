//! Replay of recorded provider responses.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentRole, CompletionProvider, CompletionRequest, ProviderError};
use crate::checkpoint::sha256_hex;
use crate::error::{Error, Result};

/// First 32 hex digits of SHA-256 over `system \0 user`.
pub fn fingerprint(system: &str, user: &str) -> String {
    let mut bytes = Vec::with_capacity(system.len() + user.len() + 1);
    bytes.extend_from_slice(system.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(user.as_bytes());
    sha256_hex(&bytes)[..32].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub role: AgentRole,
    pub fingerprint: String,
    /// Served in order; the last one repeats. A JSON string is served
    /// verbatim, anything else is serialized.
    pub responses: Vec<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub strict: bool,
    pub entries: Vec<ScriptEntry>,
    /// Fallback per role for unmatched requests in non-strict mode.
    #[serde(default)]
    pub defaults: HashMap<AgentRole, Value>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self> {
        crate::corpus::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::corpus::write_json_atomic(path, self)
    }
}

pub struct ScriptedProvider {
    strict: bool,
    entries: HashMap<(AgentRole, String), Vec<String>>,
    defaults: HashMap<AgentRole, String>,
    served: Mutex<HashMap<(AgentRole, String), usize>>,
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        let mut entries: HashMap<(AgentRole, String), Vec<String>> = HashMap::new();
        for e in script.entries {
            entries
                .entry((e.role, e.fingerprint))
                .or_default()
                .extend(e.responses.iter().map(render));
        }
        ScriptedProvider {
            strict: script.strict,
            entries,
            defaults: script.defaults.iter().map(|(r, v)| (*r, render(v))).collect(),
            served: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let script = Script::load(path)?;
        if script.entries.iter().any(|e| e.responses.is_empty()) {
            return Err(Error::Config(format!(
                "{}: script entry with no responses",
                path.display()
            )));
        }
        Ok(Self::new(script))
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete_raw(&self, req: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        let fp = fingerprint(&req.system_prompt, &req.user_prompt);
        let key = (req.role, fp);
        if let Some(list) = self.entries.get(&key).filter(|l| !l.is_empty()) {
            let mut served = self.served.lock().expect("served-count lock poisoned");
            let n = served.entry(key).or_insert(0);
            let out = list[(*n).min(list.len() - 1)].clone();
            *n += 1;
            return Ok(out);
        }
        if !self.strict {
            if let Some(d) = self.defaults.get(&req.role) {
                return Ok(d.clone());
            }
        }
        Err(ProviderError::ScriptMiss {
            role: req.role,
            fingerprint: key.1,
        })
    }
}

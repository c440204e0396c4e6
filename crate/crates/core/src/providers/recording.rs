//! Capture a provider's responses as a replayable script.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::{fingerprint, AgentRole, CompletionProvider, CompletionRequest, ProviderError, Script, ScriptEntry};

pub struct RecordingProvider {
    inner: Arc<dyn CompletionProvider>,
    log: Mutex<Log>,
}

#[derive(Default)]
struct Log {
    order: Vec<(AgentRole, String)>,
    responses: HashMap<(AgentRole, String), Vec<String>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn CompletionProvider>) -> Self {
        RecordingProvider {
            inner,
            log: Mutex::new(Log::default()),
        }
    }

    /// Strict script of everything recorded so far, in first-seen order.
    pub fn script(&self) -> Script {
        let log = self.log.lock().expect("recording lock poisoned");
        Script {
            strict: true,
            entries: log
                .order
                .iter()
                .map(|k| ScriptEntry {
                    role: k.0,
                    fingerprint: k.1.clone(),
                    responses: log.responses[k].iter().cloned().map(Value::String).collect(),
                })
                .collect(),
            defaults: HashMap::new(),
        }
    }
}

impl CompletionProvider for RecordingProvider {
    fn complete_raw(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let out = self.inner.complete_raw(req)?;
        let key = (req.role, fingerprint(&req.system_prompt, &req.user_prompt));
        let mut log = self.log.lock().expect("recording lock poisoned");
        log.responses.entry(key.clone()).or_default().push(out.clone());
        if !log.order.contains(&key) {
            log.order.push(key);
        }
        Ok(out)
    }
}

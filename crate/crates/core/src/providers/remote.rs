//! OpenAI-style chat-completions client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;

use super::{CompletionProvider, CompletionRequest, ProviderError};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    /// Overrides the role default when set.
    pub temperature: Option<f64>,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: None,
            temperature: None,
            max_attempts: 4,
            backoff_ms: 500,
            timeout_secs: 120,
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock poisoned");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteProvider {
    settings: RemoteSettings,
    client: reqwest::blocking::Client,
    token: Option<String>,
    gate: Gate,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl RemoteProvider {
    pub fn new(settings: RemoteSettings) -> Result<Self> {
        if settings.endpoint.is_empty() {
            return Err(Error::Config("remote provider needs an endpoint".into()));
        }
        let token = match &settings.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let gate = Gate {
            free: Mutex::new(settings.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Ok(RemoteProvider {
            settings,
            client,
            token,
            gate,
        })
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature.unwrap_or(req.temperature),
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Failure> {
        let _slot = self.gate.enter();
        let mut rb = self.client.post(&self.settings.endpoint).json(body);
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = rb.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let v: Value = resp
            .json()
            .map_err(|e| Failure::Retryable(format!("unreadable body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Failure::Fatal("response has no choices[0].message.content".into()))
    }
}

impl CompletionProvider for RemoteProvider {
    fn complete_raw(&self, req: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        let body = self.body(req);
        let attempts = self.settings.max_attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                let delay = self.settings.backoff_ms.saturating_mul(1 << (i - 1).min(10));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(m)) => {
                    return Err(ProviderError::Transport {
                        attempts: i + 1,
                        message: m,
                    })
                }
                Err(Failure::Retryable(m)) => {
                    warn!(role = %req.role, attempt = i + 1, error = %m, "provider call failed");
                    last = m;
                }
            }
        }
        Err(ProviderError::Transport {
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
pub(crate) mod stub {
    //! Minimal HTTP server answering canned responses in order.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    pub struct Stub {
        pub url: String,
        pub requests: Arc<Mutex<Vec<String>>>,
    }

    /// Each item is (status, body). The last one repeats.
    pub fn serve(replies: Vec<(u16, String)>) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let l = line.to_ascii_lowercase();
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                seen.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
                let (status, text) = replies[i.min(replies.len() - 1)].clone();
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        Stub { url, requests }
    }

    pub fn chat(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string()
    }
}

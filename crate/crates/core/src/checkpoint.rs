//! Checksummed JSON checkpoints.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::write_json_atomic;
use crate::error::{Error, Result};

const FORMAT: &str = "metasynth-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    sha256: String,
    payload: Value,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(payload: &Value) -> String {
    sha256_hex(&serde_json::to_vec(payload).expect("JSON values always serialize"))
}

pub fn save<T: Serialize>(path: &Path, payload: &T) -> Result<()> {
    let payload = serde_json::to_value(payload).map_err(|e| Error::Schema(e.to_string()))?;
    let env = Envelope {
        format: FORMAT.into(),
        version: VERSION,
        sha256: digest(&payload),
        payload,
    };
    write_json_atomic(path, &env)
}

/// `Ok(None)` when no checkpoint exists; any damage is an integrity error.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let integrity = |message: String| Error::Integrity {
        path: path.to_path_buf(),
        message,
    };
    let env: Envelope =
        serde_json::from_slice(&bytes).map_err(|e| integrity(format!("unreadable checkpoint: {e}")))?;
    if env.format != FORMAT || env.version != VERSION {
        return Err(integrity(format!(
            "unsupported checkpoint format {} v{}",
            env.format, env.version
        )));
    }
    if digest(&env.payload) != env.sha256 {
        return Err(integrity("checksum mismatch".into()));
    }
    serde_json::from_value(env.payload)
        .map(Some)
        .map_err(|e| integrity(format!("payload does not match expected shape: {e}")))
}

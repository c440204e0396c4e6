//! JSONL handoff files.
//!
//! Appends write one complete line per call (or per batch) with a single
//! `write_all` followed by `sync_data`. Readers ignore an unterminated final
//! line, so a crash mid-append never surfaces a partial record. Before the
//! next append the torn tail is cut off.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::warn;

use crate::error::{Error, IoContext, Result};
use crate::model::GoldenTriplet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// First malformed line aborts the read.
    #[default]
    Strict,
    /// Malformed lines are reported and skipped.
    Tolerant,
}

#[derive(Debug)]
pub struct JsonlRead<T> {
    pub records: Vec<T>,
    /// (1-based line number, message)
    pub malformed: Vec<(usize, String)>,
    /// True when an unterminated final line was ignored.
    pub torn_tail: bool,
}

/// Read a JSONL file. A missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, mode: ReadMode) -> Result<JsonlRead<T>> {
    let mut out = JsonlRead {
        records: Vec::new(),
        malformed: Vec::new(),
        torn_tail: false,
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(path, e)),
    };
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = i + 1;
        let Some(line) = raw.strip_suffix('\n') else {
            warn!(path = %path.display(), line = line_no, "ignoring unterminated final line");
            out.torn_tail = true;
            break;
        };
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(rec) => out.records.push(rec),
            Err(e) => match mode {
                ReadMode::Strict => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("{}: {e}", path.display()),
                    })
                }
                ReadMode::Tolerant => {
                    warn!(path = %path.display(), line = line_no, error = %e, "skipping malformed line");
                    out.malformed.push((line_no, e.to_string()));
                }
            },
        }
    }
    Ok(out)
}

/// Read every triplet in order; any malformed line is an error.
pub fn read_corpus(path: &Path) -> Result<Vec<GoldenTriplet>> {
    Ok(read_jsonl(path, ReadMode::Strict)?.records)
}

pub fn read_corpus_tolerant(path: &Path) -> Result<JsonlRead<GoldenTriplet>> {
    read_jsonl(path, ReadMode::Tolerant)
}

fn encode_lines<T: Serialize>(records: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Schema(e.to_string()))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Cut an unterminated tail left behind by an interrupted append.
fn repair_tail(file: &mut File, path: &Path) -> Result<()> {
    let len = file.metadata().at(path)?.len();
    if len == 0 {
        return Ok(());
    }
    let mut last = [0u8; 1];
    file.seek(SeekFrom::Start(len - 1)).at(path)?;
    file.read_exact(&mut last).at(path)?;
    if last[0] == b'\n' {
        return Ok(());
    }
    // Walk back to the previous newline.
    let mut content = Vec::new();
    file.seek(SeekFrom::Start(0)).at(path)?;
    file.read_to_end(&mut content).at(path)?;
    let keep = content
        .iter()
        .rposition(|b| *b == b'\n')
        .map_or(0, |p| p + 1);
    warn!(path = %path.display(), dropped = len as usize - keep, "truncating torn tail before append");
    file.set_len(keep as u64).at(path)?;
    Ok(())
}

/// Append a batch of records as one write.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).at(parent)?;
        }
    }
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .at(path)?;
    repair_tail(&mut file, path)?;
    file.seek(SeekFrom::End(0)).at(path)?;
    let buf = encode_lines(records)?;
    file.write_all(&buf).at(path)?;
    file.sync_data().at(path)?;
    Ok(())
}

pub fn append_corpus(path: &Path, record: &GoldenTriplet) -> Result<()> {
    append_jsonl(path, std::slice::from_ref(record))
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Write bytes through a temp file and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).at(parent)?;
        }
    }
    let tmp = temp_path(path);
    {
        let mut f = File::create(&tmp).at(&tmp)?;
        f.write_all(bytes).at(&tmp)?;
        f.sync_data().at(&tmp)?;
    }
    fs::rename(&tmp, path).at(path)?;
    Ok(())
}

pub fn write_jsonl_atomic<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_atomic(path, &encode_lines(records)?)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

/// Current length of a file, 0 when it does not exist.
pub fn file_len(path: &Path) -> Result<u64> {
    match fs::metadata(path) {
        Ok(m) => Ok(m.len()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Roll a file back to a checkpointed length. Missing files are created empty.
pub fn truncate_to(path: &Path, len: u64) -> Result<()> {
    let current = file_len(path)?;
    if current < len {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            message: format!("file is {current} bytes, checkpoint expects at least {len}"),
        });
    }
    if current == len && (len > 0 || path.exists()) {
        return Ok(());
    }
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(path)
        .at(path)?;
    f.set_len(len).at(path)?;
    f.sync_data().at(path)?;
    Ok(())
}

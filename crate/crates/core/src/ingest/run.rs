//! Resumable ingestion of a source tree into the vector index.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};
use walkdir::WalkDir;

use super::metadata::{parse_folder_info, resolve_metadata, resolve_source_kind, FolderInfo};
use super::tabular::{serialize_table, DataTable};
use super::{chunk_document, Chunk, SourceDocument, SourceKind, FOLDER_INFO_FILE};
use crate::checkpoint;
use crate::error::{Error, IoContext, Result};
use crate::model::Stage;
use crate::vecstore::{Embedder, VectorIndex};

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub source_root: PathBuf,
    pub index_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Stop with `Error::Interrupted` after this many files in this call.
    pub stop_after_files: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCheckpoint {
    /// Source-relative paths already indexed.
    pub processed: Vec<String>,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTally {
    pub chunks: usize,
    pub documents: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files_seen: usize,
    pub processed: Vec<String>,
    pub newly_processed: usize,
    pub skipped: Vec<SkippedFile>,
    pub total_chunks: usize,
    pub remainder_chunks: usize,
    /// Keyed `"{data_category}/{source_type}"`.
    pub by_category: BTreeMap<String, CategoryTally>,
    pub warnings: Vec<String>,
}

/// Source files in deterministic (path-sorted) order.
fn source_files(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::Config(format!(
            "source root {} is not a directory",
            root.display()
        )));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Config(format!("walking {}: {e}", root.display())))?;
        let name = entry.file_name().to_string_lossy();
        if entry.file_type().is_file() && name != FOLDER_INFO_FILE && !name.starts_with('.') {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Folder-info chain from the root to the file's directory.
fn folder_chain(root: &Path, file: &Path) -> Result<Vec<FolderInfo>> {
    let rel_dir = file
        .parent()
        .and_then(|p| p.strip_prefix(root).ok())
        .unwrap_or(Path::new(""));
    let mut dirs = vec![root.to_path_buf()];
    let mut cur = root.to_path_buf();
    for comp in rel_dir.components() {
        cur.push(comp);
        dirs.push(cur.clone());
    }
    let mut chain = Vec::new();
    for d in dirs {
        let f = d.join(FOLDER_INFO_FILE);
        if f.is_file() {
            let text = std::fs::read_to_string(&f).at(&f)?;
            let shown = d.strip_prefix(root).unwrap_or(&d);
            let shown = if shown.as_os_str().is_empty() {
                Path::new(".")
            } else {
                shown
            };
            chain.push(parse_folder_info(shown, &text)?);
        }
    }
    Ok(chain)
}

/// Chunks for one file.
pub(crate) fn chunk_file(root: &Path, file: &Path) -> Result<(Vec<Chunk>, Vec<String>)> {
    let chain = folder_chain(root, file)?;
    let metadata = resolve_metadata(file, &chain)?;
    let kind = resolve_source_kind(file, &chain)?;
    let bytes = std::fs::read(file).at(file)?;
    let content = String::from_utf8(bytes)
        .map_err(|_| Error::Schema(format!("{} is not valid UTF-8", file.display())))?;
    if kind == SourceKind::TabularPhysiological {
        let table = DataTable::from_csv_str(&metadata.document_name, &content)?;
        if table.rows.is_empty() {
            return Err(Error::Precondition(format!("{} has no rows", file.display())));
        }
        return Ok((serialize_table(&table, &metadata)?, Vec::new()));
    }
    let doc = SourceDocument {
        path: file.to_path_buf(),
        kind,
        content,
        document_name: metadata.document_name.clone(),
    };
    let out = chunk_document(&doc, &metadata)?;
    Ok((out.chunks, out.warnings))
}

fn rel(root: &Path, file: &Path) -> String {
    file.strip_prefix(root)
        .unwrap_or(file)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Ingest every not-yet-processed file. Re-running on a finished tree is a
/// no-op; an interrupted run resumes from the checkpoint.
pub fn run_ingest(opts: &IngestOptions, embedder: &dyn Embedder) -> Result<IngestSummary> {
    let mut cp: IngestCheckpoint = checkpoint::load(&opts.checkpoint_path)?.unwrap_or_default();
    let mut index = if opts.index_path.exists() {
        VectorIndex::load(&opts.index_path)?
    } else {
        VectorIndex::new(embedder.dimension())
    };
    if index.dimension() != embedder.dimension() {
        return Err(Error::Config(format!(
            "index dimension {} does not match embedder dimension {}",
            index.dimension(),
            embedder.dimension()
        )));
    }
    let files = source_files(&opts.source_root)?;
    let mut summary = IngestSummary {
        files_seen: files.len(),
        ..Default::default()
    };
    let mut done_this_call = 0;
    for file in &files {
        let key = rel(&opts.source_root, file);
        if cp.processed.contains(&key) || cp.skipped.iter().any(|s| s.path == key) {
            continue;
        }
        if opts.stop_after_files == Some(done_this_call) {
            return Err(Error::Interrupted {
                stage: Stage::Ingest,
                after: done_this_call,
            });
        }
        match chunk_file(&opts.source_root, file) {
            Ok((chunks, warnings)) => {
                let n = chunks.len();
                index.index_chunks(chunks, embedder)?;
                index.persist(&opts.index_path)?;
                info!(file = %key, chunks = n, "ingested");
                summary.warnings.extend(warnings);
                cp.processed.push(key);
            }
            Err(e @ (Error::Provider(_) | Error::Io { .. })) => return Err(e),
            Err(e) => {
                warn!(file = %key, error = %e, "skipping file");
                cp.skipped.push(SkippedFile {
                    path: key,
                    reason: e.to_string(),
                });
            }
        }
        checkpoint::save(&opts.checkpoint_path, &cp)?;
        summary.newly_processed += 1;
        done_this_call += 1;
    }
    if !opts.index_path.exists() {
        index.persist(&opts.index_path)?;
    }
    checkpoint::save(&opts.checkpoint_path, &cp)?;

    for c in index.chunks() {
        let key = format!("{}/{}", c.metadata.data_category, c.metadata.source_type);
        let t = summary.by_category.entry(key).or_default();
        t.chunks += 1;
        if !t.documents.contains(&c.metadata.document_name) {
            t.documents.push(c.metadata.document_name.clone());
        }
        if c.remainder {
            summary.remainder_chunks += 1;
        }
    }
    summary.total_chunks = index.len();
    summary.processed = cp.processed;
    summary.skipped = cp.skipped;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecstore::HashingEmbedder;
    use std::fs;

    fn tree(root: &Path) {
        fs::create_dir_all(root.join("coaching")).unwrap();
        fs::create_dir_all(root.join("physio")).unwrap();
        fs::write(
            root.join("coaching/_folder_info.json"),
            r#"{"source_kind": "DrillManual", "stroke_type": "Freestyle"}"#,
        )
        .unwrap();
        let drill = "word ".repeat(300);
        fs::write(
            root.join("coaching/a.md"),
            format!("Drill 1\n\n{drill}\n\nDrill 2\n\n{drill}\n"),
        )
        .unwrap();
        fs::write(root.join("coaching/b.md"), format!("Drill 1\n\n{drill}\n")).unwrap();
        fs::write(root.join("coaching/broken.md"), [0xff, 0xfe, 0x00]).unwrap();
        fs::write(
            root.join("physio/athletes.csv"),
            "athlete_id,stroke_type,vo2max,hrv\nA1,Freestyle,55,70\nA2,Backstroke,60,65\n",
        )
        .unwrap();
    }

    fn opts(dir: &Path) -> IngestOptions {
        IngestOptions {
            source_root: dir.join("src"),
            index_path: dir.join("out/index.json"),
            checkpoint_path: dir.join("out/ingest_checkpoint.json"),
            stop_after_files: None,
        }
    }

    #[test]
    fn ingest_skip_and_idempotent_rerun() {
        let dir = tempfile::tempdir().unwrap();
        tree(&dir.path().join("src"));
        let e = HashingEmbedder::new(32, 0);
        let s = run_ingest(&opts(dir.path()), &e).unwrap();
        assert_eq!(s.processed.len(), 3);
        assert_eq!(s.skipped.len(), 1);
        assert!(s.skipped[0].path.ends_with("broken.md"));
        assert!(s.by_category.contains_key("Physiological/Physiological"));
        let again = run_ingest(&opts(dir.path()), &e).unwrap();
        assert_eq!(again.newly_processed, 0);
        assert_eq!(again.total_chunks, s.total_chunks);
    }

    #[test]
    fn interrupted_ingest_resumes_to_same_index() {
        let dir = tempfile::tempdir().unwrap();
        tree(&dir.path().join("src"));
        let e = HashingEmbedder::new(32, 0);
        let full = run_ingest(&opts(dir.path()), &e).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        tree(&dir2.path().join("src"));
        let mut o = opts(dir2.path());
        o.stop_after_files = Some(2);
        assert!(matches!(run_ingest(&o, &e), Err(Error::Interrupted { .. })));
        o.stop_after_files = None;
        let resumed = run_ingest(&o, &e).unwrap();
        assert_eq!(resumed.total_chunks, full.total_chunks);
        let a = VectorIndex::load(&opts(dir.path()).index_path).unwrap();
        let b = VectorIndex::load(&o.index_path).unwrap();
        let ids = |i: &VectorIndex| i.chunks().iter().map(|c| c.chunk_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }
}

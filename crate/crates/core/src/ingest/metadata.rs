//! `_folder_info.json` parsing and root-to-leaf metadata inheritance.

use std::path::Path;

use serde_json::Value;

use super::{ChunkMetadata, SourceKind};
use crate::error::{Error, Result};
use crate::model::{ComplexityLevel, DataCategory, StrokeType};

pub const FOLDER_INFO_FILE: &str = "_folder_info.json";

const SOURCE_TYPES: [&str; 3] = ["Physiological", "Unstructured", "Performance"];
const MAX_LEVELS: usize = 3;

/// Partial metadata declared at one directory level.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FolderInfo {
    /// Directory the declaration came from, for error messages.
    pub folder: String,
    pub source_type: Option<String>,
    pub data_category: Option<String>,
    pub stroke_type: Option<String>,
    pub document_name: Option<String>,
    pub complexity_level: Option<String>,
    pub source_kind: Option<SourceKind>,
}

pub fn parse_folder_info(folder: &Path, json: &str) -> Result<FolderInfo> {
    let name = folder.display().to_string();
    let value: Value = serde_json::from_str(json)
        .map_err(|e| Error::Config(format!("{FOLDER_INFO_FILE} in {name}: {e}")))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(format!(
            "{FOLDER_INFO_FILE} in {name} must be a JSON object"
        )));
    };
    let mut info = FolderInfo {
        folder: name.clone(),
        ..Default::default()
    };
    for (key, v) in map {
        let Value::String(s) = v else {
            return Err(Error::Config(format!(
                "conflicting type for `{key}` in {name}: expected a string, found {v}"
            )));
        };
        let bad = |what: &str| Error::Config(format!("invalid {what} `{s}` in {name}"));
        match key.as_str() {
            "source_type" => {
                if !SOURCE_TYPES.contains(&s.as_str()) {
                    return Err(bad("source_type"));
                }
                info.source_type = Some(s);
            }
            "data_category" => {
                s.parse::<DataCategory>().map_err(|_| bad("data_category"))?;
                info.data_category = Some(s);
            }
            "stroke_type" => {
                s.parse::<StrokeType>().map_err(|_| bad("stroke_type"))?;
                info.stroke_type = Some(s);
            }
            "complexity_level" => {
                s.parse::<ComplexityLevel>()
                    .map_err(|_| bad("complexity_level"))?;
                info.complexity_level = Some(s);
            }
            "document_name" => info.document_name = Some(s),
            "source_kind" => {
                let kind = serde_json::from_value::<SourceKind>(Value::String(s.clone()))
                    .map_err(|_| bad("source_kind"))?;
                info.source_kind = Some(kind);
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}` in {FOLDER_INFO_FILE} of {name}"
                )))
            }
        }
    }
    Ok(info)
}

fn check_chain(chain: &[FolderInfo]) -> Result<()> {
    if chain.len() > MAX_LEVELS {
        return Err(Error::Config(format!(
            "metadata chain has {} levels, at most {MAX_LEVELS} allowed (deepest: {})",
            chain.len(),
            chain.last().map(|f| f.folder.as_str()).unwrap_or("")
        )));
    }
    Ok(())
}

/// Decide how a file is segmented: declared `source_kind` wins, `.csv` is
/// tabular, and results folders (`source_type = Performance`) are event text.
pub fn resolve_source_kind(file_path: &Path, chain: &[FolderInfo]) -> Result<SourceKind> {
    check_chain(chain)?;
    if let Some(kind) = chain.iter().rev().find_map(|f| f.source_kind) {
        return Ok(kind);
    }
    let is_csv = file_path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return Ok(SourceKind::TabularPhysiological);
    }
    let source_type = chain.iter().rev().find_map(|f| f.source_type.as_deref());
    if source_type == Some("Performance") {
        return Ok(SourceKind::CompetitionResults);
    }
    Err(Error::Config(format!(
        "cannot resolve source kind for {}: declare `source_kind` in a {FOLDER_INFO_FILE}",
        file_path.display()
    )))
}

/// Merge a root-to-leaf chain; deeper levels override shallower ones.
pub fn resolve_metadata(file_path: &Path, chain: &[FolderInfo]) -> Result<ChunkMetadata> {
    check_chain(chain)?;
    let pick = |f: fn(&FolderInfo) -> Option<&String>| -> Option<String> {
        chain.iter().rev().find_map(|info| f(info).cloned())
    };
    let kind = resolve_source_kind(file_path, chain).ok();
    let source_type = pick(|f| f.source_type.as_ref()).unwrap_or_else(|| {
        kind.map_or("Unstructured", SourceKind::default_source_type)
            .to_string()
    });
    let data_category = pick(|f| f.data_category.as_ref()).unwrap_or_else(|| {
        if SOURCE_TYPES.contains(&source_type.as_str()) {
            source_type.clone()
        } else {
            "Unstructured".to_string()
        }
    });
    let document_name = file_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Config(format!("{} has no file name", file_path.display())))?;
    Ok(ChunkMetadata {
        source_type,
        data_category,
        stroke_type: pick(|f| f.stroke_type.as_ref()).unwrap_or_else(|| "General".into()),
        document_name,
        complexity_level: pick(|f| f.complexity_level.as_ref())
            .unwrap_or_else(|| "Medium".into()),
    })
}

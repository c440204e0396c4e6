//! Persistent exact-search vector index with metadata filters.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::checkpoint::sha256_hex;
use crate::corpus::write_atomic;
use crate::error::{Error, IoContext, Result};
use crate::ingest::{Chunk, ChunkMetadata};
use crate::model::{variables, DataCategory, PerformanceAnchor, QueryType};

mod embed;

pub use embed::{
    cosine, embed, embedder_from_spec, Embedder, EmbeddingMode, EmbeddingProviderSpec,
    HashingEmbedder, RemoteEmbedder, DEFAULT_DIMENSION,
};
pub(crate) use embed::fnv1a_str;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataField {
    SourceType,
    DataCategory,
    StrokeType,
    DocumentName,
    ComplexityLevel,
}

impl MetadataField {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "source_type" => MetadataField::SourceType,
            "data_category" => MetadataField::DataCategory,
            "stroke_type" => MetadataField::StrokeType,
            "document_name" => MetadataField::DocumentName,
            "complexity_level" => MetadataField::ComplexityLevel,
            other => return Err(Error::Config(format!("unknown metadata field `{other}`"))),
        })
    }

    fn get(self, m: &ChunkMetadata) -> &str {
        match self {
            MetadataField::SourceType => &m.source_type,
            MetadataField::DataCategory => &m.data_category,
            MetadataField::StrokeType => &m.stroke_type,
            MetadataField::DocumentName => &m.document_name,
            MetadataField::ComplexityLevel => &m.complexity_level,
        }
    }
}

/// Conjunction of exact-match constraints on chunk metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataFilter(pub BTreeMap<MetadataField, String>);

impl MetadataFilter {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn with(mut self, field: MetadataField, value: impl Into<String>) -> Self {
        self.0.insert(field, value.into());
        self
    }

    /// Build from string keys; unknown keys are rejected.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut f = Self::default();
        for (k, v) in pairs {
            f.0.insert(MetadataField::parse(k)?, v.to_string());
        }
        Ok(f)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn matches(&self, m: &ChunkMetadata) -> bool {
        self.0.iter().all(|(f, v)| f.get(m) == v)
    }
}

/// Category filter for generator retrieval.
pub fn route_category(query_type: QueryType, anchor: &PerformanceAnchor) -> MetadataFilter {
    let vars = &anchor.anchor_variables;
    if query_type == QueryType::Multimodal && vars.iter().any(|v| variables::is_imu(v)) {
        return MetadataFilter::any().with(
            MetadataField::DataCategory,
            DataCategory::Physiological.as_str(),
        );
    }
    if vars
        .iter()
        .any(|v| v == "training_load_au" || v == "adaptation_pct")
    {
        return MetadataFilter::any().with(MetadataField::SourceType, "Unstructured");
    }
    MetadataFilter::any()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
    sha256: String,
}

const INDEX_FORMAT: &str = "metasynth-index";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dimension: usize,
    entries: Vec<Chunk>,
    positions: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Self {
        VectorIndex {
            dimension,
            entries: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.entries
    }

    pub fn get(&self, chunk_id: &str) -> Option<&Chunk> {
        self.positions.get(chunk_id).map(|&i| &self.entries[i])
    }

    /// Insert an embedded chunk. Returns `true` if it replaced an existing id.
    pub fn insert(&mut self, chunk: Chunk) -> Result<bool> {
        let dim = chunk.embedding.as_ref().map(Vec::len);
        if dim != Some(self.dimension) {
            return Err(Error::Index(format!(
                "chunk {} has embedding dimension {:?}, index expects {}",
                chunk.chunk_id, dim, self.dimension
            )));
        }
        if let Some(&i) = self.positions.get(&chunk.chunk_id) {
            warn!(chunk_id = %chunk.chunk_id, "duplicate chunk id, overwriting");
            self.entries[i] = chunk;
            return Ok(true);
        }
        self.positions.insert(chunk.chunk_id.clone(), self.entries.len());
        self.entries.push(chunk);
        Ok(false)
    }

    /// Embed (if needed) and insert a batch; returns how many new ids were added.
    pub fn index_chunks(&mut self, chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<usize> {
        let missing: Vec<&str> = chunks
            .iter()
            .filter(|c| c.embedding.is_none())
            .map(|c| c.text.as_str())
            .collect();
        let mut vectors = embedder.embed_batch(&missing)?.into_iter();
        let mut added = 0;
        for mut c in chunks {
            if c.embedding.is_none() {
                c.embedding = vectors.next();
            }
            if !self.insert(c)? {
                added += 1;
            }
        }
        Ok(added)
    }

    /// Top-k by cosine similarity among chunks passing `filter`; ties broken
    /// by chunk id.
    pub fn retrieve(&self, query: &[f64], k: usize, filter: &MetadataFilter) -> Vec<ScoredChunk> {
        let mut scored: Vec<(f64, &Chunk)> = self
            .entries
            .iter()
            .filter(|c| filter.matches(&c.metadata))
            .map(|c| (cosine(query, c.embedding.as_deref().unwrap_or(&[])), c))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.chunk_id.cmp(&b.1.chunk_id))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(score, c)| ScoredChunk {
                chunk: c.clone(),
                score,
            })
            .collect()
    }

    pub fn retrieve_text(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        filter: &MetadataFilter,
    ) -> Result<Vec<ScoredChunk>> {
        let v = embedder.embed(query)?;
        Ok(self.retrieve(&v, k, filter))
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_vec(&self.entries).map_err(|e| Error::Index(e.to_string()))?;
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            dimension: self.dimension,
            count: self.entries.len(),
            sha256: sha256_hex(&body),
        };
        let mut bytes = serde_json::to_vec(&header).map_err(|e| Error::Index(e.to_string()))?;
        bytes.push(b'\n');
        bytes.extend_from_slice(&body);
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).at(path)?;
        let bad = |m: String| Error::Index(format!("{}: {m}", path.display()));
        let split = bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| bad("missing header".into()))?;
        let header: IndexHeader = serde_json::from_slice(&bytes[..split])
            .map_err(|e| bad(format!("unreadable header: {e}")))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let body = &bytes[split + 1..];
        if sha256_hex(body) != header.sha256 {
            return Err(bad("checksum mismatch (truncated or modified)".into()));
        }
        let entries: Vec<Chunk> =
            serde_json::from_slice(body).map_err(|e| bad(format!("unreadable body: {e}")))?;
        if entries.len() != header.count {
            return Err(bad(format!(
                "header declares {} chunks, body holds {}",
                header.count,
                entries.len()
            )));
        }
        let mut index = VectorIndex::new(header.dimension);
        for c in entries {
            index.insert(c)?;
        }
        Ok(index)
    }
}

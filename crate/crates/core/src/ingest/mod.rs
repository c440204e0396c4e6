//! Knowledge-base construction.
//!
//! Source files become metadata-tagged chunks. Prose is segmented at its
//! natural unit (drills, concepts, events); tables are serialized into
//! narrative paragraphs at the record and aggregate level. Each chunk kind
//! has a token budget:
//!
//! | kind        | tokens    |
//! |-------------|-----------|
//! | drill       | 300..=600 |
//! | handbook    | 400..=800 |
//! | record      | 150..=300 |
//! | aggregate   | 200..=400 |
//! | event       | 150..=250 |
//!
//! Only the final chunk of a document may fall under the minimum, and it is
//! flagged as a remainder.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

mod chunker;
mod metadata;
mod run;
pub mod tabular;

pub use chunker::{chunk_document, ChunkingOutcome};
pub use metadata::{
    parse_folder_info, resolve_metadata, resolve_source_kind, FolderInfo, FOLDER_INFO_FILE,
};
pub use run::{run_ingest, IngestCheckpoint, IngestOptions, IngestSummary, SkippedFile};
pub use tabular::{serialize_aggregate, serialize_record, DataTable, Stratum, TableSchema};

/// `ceil(chars / 4)`, counted in Unicode scalar values.
pub fn approx_token_count(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    DrillManual,
    PhysiologyHandbook,
    TabularPhysiological,
    CompetitionResults,
}

impl SourceKind {
    pub fn default_source_type(self) -> &'static str {
        match self {
            SourceKind::DrillManual | SourceKind::PhysiologyHandbook => "Unstructured",
            SourceKind::TabularPhysiological => "Physiological",
            SourceKind::CompetitionResults => "Performance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BudgetKind {
    Drill,
    Handbook,
    Record,
    Aggregate,
    Event,
}

impl BudgetKind {
    /// Inclusive (min, max) token range.
    pub fn range(self) -> (usize, usize) {
        match self {
            BudgetKind::Drill => (300, 600),
            BudgetKind::Handbook => (400, 800),
            BudgetKind::Record => (150, 300),
            BudgetKind::Aggregate => (200, 400),
            BudgetKind::Event => (150, 250),
        }
    }

    pub fn admits(self, tokens: usize) -> bool {
        let (lo, hi) = self.range();
        (lo..=hi).contains(&tokens)
    }
}

#[derive(Debug, Clone)]
pub struct SourceDocument {
    pub path: PathBuf,
    pub kind: SourceKind,
    pub content: String,
    pub document_name: String,
}

/// The five metadata fields every chunk carries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkMetadata {
    pub source_type: String,
    pub data_category: String,
    pub stroke_type: String,
    pub document_name: String,
    pub complexity_level: String,
}

impl ChunkMetadata {
    pub fn is_total(&self) -> bool {
        [
            &self.source_type,
            &self.data_category,
            &self.stroke_type,
            &self.document_name,
            &self.complexity_level,
        ]
        .iter()
        .all(|v| !v.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chunk {
    pub chunk_id: String,
    pub text: String,
    pub token_count: usize,
    pub metadata: ChunkMetadata,
    pub budget: BudgetKind,
    /// Final chunk below the budget minimum.
    #[serde(default)]
    pub remainder: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Chunk {
    pub(crate) fn new(
        chunk_id: String,
        text: String,
        metadata: ChunkMetadata,
        budget: BudgetKind,
    ) -> Self {
        let token_count = approx_token_count(&text);
        let remainder = token_count < budget.range().0;
        Chunk {
            chunk_id,
            text,
            token_count,
            metadata,
            budget,
            remainder,
            embedding: None,
        }
    }

    pub fn within_budget(&self) -> bool {
        self.budget.admits(self.token_count)
    }
}

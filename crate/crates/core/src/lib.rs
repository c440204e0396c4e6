//! Staged synthesis of grounded, rule-validated coaching question-answer
//! corpora for competitive swimming.
//!
//! Stages run in order: ingest builds the knowledge base, the architect finds
//! performance anchors, the generator drafts triplets per anchor and the
//! critic validates them. Every stage checkpoints and can resume.

pub mod architect;
pub mod checkpoint;
pub mod corpus;
pub mod critic;
pub mod error;
pub mod fixtures;
pub mod generator;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod providers;
pub mod vecstore;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/grounding.md")]
    mod grounding {}
}

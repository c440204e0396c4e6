use std::path::PathBuf;

use thiserror::Error;

use crate::model::Stage;
use crate::providers::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("checkpoint integrity error at {}: {message}", path.display())]
    Integrity { path: PathBuf, message: String },

    #[error("missing rule-context field `{0}`")]
    MissingField(String),

    #[error("regeneration contract violation: {0}")]
    Contract(String),

    #[error("interrupted during {stage:?} after {after} item(s)")]
    Interrupted { stage: Stage, after: usize },

    #[error("no run to resume")]
    NoRun,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attach a path to an `io::Result`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate incident_id {id:?} on line {line} (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },

    #[error("line {line}: missing source")]
    MissingSource { line: usize },

    #[error("variable {0:?} does not occur in any label map")]
    UnknownVariable(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("no encoding available for incident {0:?}")]
    MissingEmbedding(String),

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("version conflict: latest stored version is {latest}")]
    Conflict { latest: u32 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Invalid(_))
    }
}

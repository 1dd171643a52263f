use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: row {row} (line {line}) has {found} cells, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("relation `{relation}`: duplicate attribute `{attribute}` after normalization")]
    DuplicateAttribute { relation: String, attribute: String },

    #[error("relation `{relation}`: tuple {row} has {found} cells, expected {expected}")]
    Arity {
        relation: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid target schema: {0}")]
    TargetSchema(String),

    #[error("invalid csv dialect: {0}")]
    Dialect(String),

    #[error("dangling reference to {relation}.{attribute}")]
    DanglingRef { relation: String, attribute: String },

    #[error("{attribute} is not mapped by the context relationship for `{context}`")]
    UnmappedAttribute { context: String, attribute: String },

    #[error("column {relation}.{attribute} has no non-null values")]
    EmptyColumn { relation: String, attribute: String },

    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("evaluation: {0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while reading or validating the pipeline config.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Params(_) | Error::TargetSchema(_))
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// A malformed record in a line-oriented input file (1-based line).
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate pair id `{id}`")]
    DuplicateId { id: String, line: usize },

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pair count mismatch: candidate has {candidate} pairs, reference has {reference}")]
    PairCount { candidate: usize, reference: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("overflow while computing {what}")]
    Overflow { what: String },

    #[error("cutoff mismatch: expected {expected}, got {actual}")]
    CutoffMismatch { expected: usize, actual: usize },

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("integration became non-finite at t = {time}")]
    Integration { time: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn overflow(what: impl Into<String>) -> Error {
    Error::Overflow { what: what.into() }
}

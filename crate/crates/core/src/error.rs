use thiserror::Error;

use crate::model::ValueKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("cannot compare {left} with {right}")]
    KindMismatch { left: ValueKind, right: ValueKind },

    #[error("query parse error at clause {clause}: {message}")]
    Parse { clause: usize, message: String },

    #[error("no monitored rows in the current epoch")]
    NoSamples,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("brute-force oracle refuses n = {n} (limit {limit})")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data format error at line {line}: {message}")]
    Format { line: usize, message: String },
}

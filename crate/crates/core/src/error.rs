use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resource exhausted: {0}")]
    ResourceExhausted(String),

    #[error("invalid page size {page_size}: {reason}")]
    InvalidPageSize { page_size: usize, reason: &'static str },

    #[error("invalid count: {0}")]
    InvalidCount(&'static str),

    #[error("{what} {index} out of bounds (limit {limit})")]
    OutOfBounds {
        what: &'static str,
        index: u64,
        limit: u64,
    },

    #[error("remap failed: {0}")]
    RemapFailed(#[source] io::Error),

    #[error("malformed mappings line {line:?}: {reason}")]
    MapsParse { line: String, reason: &'static str },

    #[error("invalid range [{lower}, {upper}]")]
    InvalidRange { lower: u64, upper: u64 },

    #[error("physical page {0} is already mapped by this view")]
    DuplicatePage(usize),

    #[error("physical page {0} is not mapped by this view")]
    PageNotMapped(usize),

    #[error("generator produced {got} values, expected {expected}")]
    LengthMismatch { expected: u64, got: u64 },

    #[error("stale update for row {row}: record says old={expected}, column holds {found}")]
    StaleOldValue { row: u64, expected: u64, found: u64 },

    #[error("mapping worker stopped before all requests were applied")]
    MapperStopped,

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("query sequences do not match: {0}")]
    SequenceMismatch(String),

    #[error("correctness check failed: {0}")]
    CorrectnessFailure(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

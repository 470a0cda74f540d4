//! Command-line front end for the urn-ensemble toolkit: configuration
//! loading, ensemble simulation to disk, offline verification gates, and
//! report rendering. All numerical work lives in the `urnlab` library
//! crate; this crate owns files, hashes, and exit codes.

// `!(x > y)` rather than `x <= y` in validations: the negated form is true
// for NaN, so malformed numbers fail closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops are kept where the index itself participates (matrix entries,
// 1-based file ids).
#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod report;

/// Anything that should stop a run before (or instead of) a verdict.
/// Gate *failures* are not errors — they are recorded in the report and
/// surface as exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] urnlab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, Error>;

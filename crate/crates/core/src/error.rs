use thiserror::Error;

/// Unified error type for the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is out of range or malformed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An internal state consistency check failed (counts out of bounds,
    /// mismatched lengths, broken column identities).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// The request would exceed a hard resource limit.
    #[error("resource bound exceeded: {0}")]
    ResourceBound(String),

    /// A statistical operation was invoked outside its domain of validity
    /// (wrong parameter regime, unrecorded time, sample too small).
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// An estimator cannot be formed from the given ensemble (for example a
    /// zero variance where a positive one is required).
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    /// A file or stream could not be parsed as the expected format.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

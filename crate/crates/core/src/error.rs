//! Crate-wide error type. Contract violations are reported through dedicated
//! variants so callers and the CLI can map them onto stable exit codes.

/// Unified error for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape or dimension mismatch in a numeric primitive.
    #[error("dimension mismatch in {op}: {detail}")]
    Dim { op: &'static str, detail: String },

    /// A caller broke an API contract (wrong mode, non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration or argument value is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The request is structurally valid but too large for exact evaluation.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Malformed bytes in a binary container; `offset` is absolute in-file.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// No valid sample exists for the requested draw.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// NaN/Inf or another numerical failure was detected.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Too little data for the requested statistical procedure.
    #[error("insufficient statistical power: {0}")]
    Statistics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by numeric kernels.
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim { op, detail: detail.into() }
    }
}

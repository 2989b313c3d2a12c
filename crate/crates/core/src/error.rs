use thiserror::Error;

/// Errors raised by the library.
///
/// The variants line up with the CLI exit-code policy: `Verification` maps to
/// exit code 2, everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, out-of-range indices, mismatched grids.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A required callable or option was not supplied.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called on an input that violates its precondition
    /// (e.g. a non-geometric driver where a weak geometric one is required).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A point fell outside the sampled domain of a map.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical solve produced a non-finite state.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// A mathematical check failed.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A record in a data file violated the format or an item invariant.
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("endpoint error: {0}")]
    Endpoint(String),

    #[error("endpoint capability missing: {0}")]
    Capability(String),

    #[error("giving up after {attempts} attempt(s): {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("malformed endpoint response: {0}")]
    BadResponse(String),

    #[error("replay log has no entry for request digest {0}")]
    ReplayMiss(String),

    #[error("verdict parse error: {0}")]
    Verdict(String),

    #[error("truncated tensor file: {0}")]
    Truncated(String),

    #[error("tensor offset mismatch: {0}")]
    OffsetMismatch(String),

    #[error("unsupported dtype: {0}")]
    UnsupportedDtype(String),
}

impl Error {
    /// Process exit code: 0 success, 1 validation, 2 endpoint, 3 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Template(_) => 1,
            Error::Auth(_)
            | Error::Endpoint(_)
            | Error::Capability(_)
            | Error::RetriesExhausted { .. }
            | Error::BadResponse(_)
            | Error::ReplayMiss(_) => 2,
            Error::Io(_)
            | Error::Json(_)
            | Error::Malformed { .. }
            | Error::Data(_)
            | Error::Verdict(_)
            | Error::Truncated(_)
            | Error::OffsetMismatch(_)
            | Error::UnsupportedDtype(_) => 3,
        }
    }
}

use thiserror::Error;

/// Errors produced anywhere in the alignment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("ill-conditioned batch: {0}")]
    IllConditioned(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("objective diverged at outer iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    /// A verification command found a mismatch.
    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPsd(_)
                | Error::IllConditioned(_)
                | Error::NonFinite(_)
                | Error::Diverged { .. }
                | Error::CheckFailed(_)
        )
    }
}

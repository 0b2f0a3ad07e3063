use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmfvbError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite quantity was produced during an update. Carries the
    /// block label and particle index where it was first observed.
    #[error("numerical failure in block `{block}` at particle {particle}: {detail}")]
    NumericalFailure {
        block: String,
        particle: usize,
        detail: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PmfvbError>;

impl PmfvbError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        PmfvbError::InvalidArgument(msg.into())
    }
}

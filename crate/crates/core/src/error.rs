use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("need at least {needed} shares to reconstruct, got {got}")]
    InsufficientShares { needed: usize, got: usize },

    #[error("share set is inconsistent with a degree-{degree} polynomial")]
    Tampered { degree: usize },

    #[error("secure aggregation needs at least 3 contributors, got {0}")]
    TooFewContributors(usize),

    #[error("value {value} outside fixed-point range of 2^{bits}")]
    RangeOverflow { value: f64, bits: u32 },

    #[error("secure aggregation aborted in round {round}: {source}")]
    RoundAborted {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("divergence detected at round {round}: worst error {value}")]
    Divergence { round: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Whether the error originated in the secure aggregation layer.
    pub fn is_secagg_abort(&self) -> bool {
        match self {
            Error::RoundAborted { .. }
            | Error::Tampered { .. }
            | Error::InsufficientShares { .. }
            | Error::TooFewContributors(_) => true,
            Error::RangeOverflow { .. } => true,
            _ => false,
        }
    }
}

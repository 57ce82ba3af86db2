use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A rank-one pseudo-inverse update whose denominator vanished, meaning
    /// the range of the matrix would not be preserved.
    #[error("singular rank-one update: 1 + lambda * u' A+ u = {denominator:e}")]
    SingularUpdate { denominator: f64 },

    /// A design matrix lost rank relative to its direction set.
    #[error("rank violation on {scope}: design rank {actual} < direction rank {expected}")]
    RankViolation {
        scope: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    /// Instance or problem file could not be accepted. `field` names the
    /// first offending field.
    #[error("load error in `{field}`: {reason}")]
    Load { field: String, reason: String },

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn load(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

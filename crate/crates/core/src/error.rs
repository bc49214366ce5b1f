use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid value for `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("line point lambda {got} is below the existence bound {min}")]
    BelowLineExistence { min: f64, got: f64 },

    #[error("no period-{period} orbit found from the supplied guesses")]
    OrbitNotFound { period: usize },

    #[error("series has zero variance")]
    ZeroVariance,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

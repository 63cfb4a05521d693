use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, hyperparameters or environment settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// NaN or infinite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke an operation precondition (stepping a finished episode, bad action id).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("advisor protocol error: {0}")]
    Protocol(String),

    #[error("advisor did not reply to query {0} in time")]
    AdvisorTimeout(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains a non-finite value")))
    }
}

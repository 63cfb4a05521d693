use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] askac_core::Error),

    #[error("config {path}: {source}")]
    ConfigFile { path: PathBuf, source: toml::de::Error },

    #[error("invalid setting: {0}")]
    Setting(String),

    /// A ratio metric whose run never reached the target.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

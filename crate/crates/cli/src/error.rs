use std::path::PathBuf;

use thiserror::Error;

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

macro_rules! runtime_from {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        })*
    };
}

runtime_from!(
    cmqe_core::corpus::CorpusError,
    cmqe_core::embedding::EmbeddingError,
    cmqe_core::embedding::CacheError,
    cmqe_core::gbdt::GbdtError,
    cmqe_core::metrics::MetricsError,
    serde_json::Error,
);

pub type Result<T, E = CliError> = std::result::Result<T, E>;

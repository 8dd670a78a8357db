use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] clipwave_core::Error),
    #[error("[harness] invalid config: {0}")]
    Config(String),
    #[error("[harness] {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[harness] json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("[harness] csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("[harness] rate fit needs {needed}, found {found}")]
    InsufficientPoints { needed: String, found: String },
    #[error("[harness] regret accounting needs a run with tracing enabled")]
    TraceDisabled,
    #[error("[harness] checkpoint mismatch: {0}")]
    Checkpoint(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

/// Failures surfaced by the runner and the command-line tools.
#[derive(Debug, thiserror::Error)]
pub enum OsenError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] osen_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("stage `{stage}` failed: {source}\n--- config ---\n{config}")]
    Stage { stage: String, config: String, source: Box<OsenError> },
}

impl OsenError {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            OsenError::Config(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OsenError::Io { path: path.into(), source }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        OsenError::Data { path: path.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, OsenError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("file format error: {0}")]
    FileFormat(String),
    #[error("{failed} of {total} checks failed")]
    CheckFailed { failed: usize, total: usize },
    #[error(transparent)]
    Core(#[from] cslab_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 0 pass, 1 failed check or numerical error, 2 configuration or input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed { .. } | CliError::Core(_) => 1,
            _ => 2,
        }
    }
}

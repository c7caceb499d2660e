use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    ConfigAt { path: PathBuf, line: usize, msg: String },
    #[error("numerical failure: {0}")]
    Numerical(#[source] sqa_core::Error),
    #[error("run incomplete: {0}")]
    Incomplete(String),
    #[error("{0}")]
    Core(#[source] sqa_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigAt { .. } | CliError::Core(_) => 2,
            CliError::Numerical(_) | CliError::Incomplete(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<sqa_core::Error> for CliError {
    fn from(e: sqa_core::Error) -> Self {
        if e.is_numerical() || matches!(e, sqa_core::Error::Truncated { .. }) {
            CliError::Numerical(e)
        } else {
            CliError::Core(e)
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

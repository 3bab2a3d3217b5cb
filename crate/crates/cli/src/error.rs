use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("learning stopped after {iterations} iterations without converging (report written to {})", report.display())]
    NotConverged { iterations: usize, report: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] modebank::Error),
}

impl CliError {
    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 configuration (including unwritable outputs),
    /// 3 input data, 4 numerical failure, 5 learning not converged.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::NotConverged { .. } => 5,
            CliError::Io { .. } => 2,
            CliError::Core(e) => match e.root() {
                modebank::Error::Config(_) => 2,
                modebank::Error::NotConverged { .. } => 5,
                _ => 4,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

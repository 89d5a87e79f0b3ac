use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] amplitude_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("integrity check failed: {0}")]
    Integrity(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for bad input, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use amplitude_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::Dimension { .. }
                | E::Domain(_)
                | E::InvalidModel(_)
                | E::Config(_)
                | E::Alignment(_)
                | E::Precondition(_) => 2,
                E::BlowUp(_) | E::Singular(_) | E::NotPsd(_) | E::Integration(_) => 3,
            },
            CliError::Io { .. } | CliError::Integrity(_) => 4,
        }
    }
}

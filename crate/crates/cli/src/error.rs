use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }
}

/// Attaches the offending path to a library error. I/O failures keep
/// their own exit code; everything else is a data problem.
pub fn with_path(path: impl AsRef<Path>) -> impl FnOnce(spdmix::Error) -> CliError {
    move |e| match e {
        spdmix::Error::Io(source) => CliError::io(path, source),
        other => CliError::Data(format!("{}: {other}", path.as_ref().display())),
    }
}

impl From<spdmix::Error> for CliError {
    fn from(e: spdmix::Error) -> Self {
        match e {
            spdmix::Error::Io(source) => CliError::Io { path: PathBuf::from("<stream>"), source },
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

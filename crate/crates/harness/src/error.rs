use std::path::PathBuf;

use seqrank::bounds::BoundError;
use seqrank::datagen::DataError;
use seqrank::{LinalgError, SolveError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read config `{path}`: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config `{path}`: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad matrix file `{path}`: {message}")]
    MatrixFormat { path: PathBuf, message: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl HarnessError {
    /// 1 for anything the user can fix in the config or on the command line,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigRead { .. }
            | HarnessError::ConfigParse { .. }
            | HarnessError::Config(_)
            | HarnessError::Io { .. }
            | HarnessError::MatrixFormat { .. } => 1,
            HarnessError::Solve(SolveError::InvalidConfig(_) | SolveError::InvalidAllocation(_)) => 1,
            HarnessError::Data(DataError::InvalidNoise(_) | DataError::RankTooLarge { .. }) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

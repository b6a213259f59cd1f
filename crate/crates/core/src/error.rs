use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EplError>;

#[derive(Debug, Error)]
pub enum EplError {
    #[error("empty sequence is not a permutation")]
    EmptyPermutation,

    #[error("entry {value} appears more than once")]
    DuplicateEntry { value: usize },

    #[error("entry {value} is outside 1..={k}")]
    OutOfRange { value: usize, k: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}, line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl EplError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EplError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        EplError::InvalidValue(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        EplError::Config(msg.into())
    }

    /// Process exit code: 1 validation, 2 I/O, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            EplError::Io { .. } => 2,
            EplError::Numerical(_) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(EplError::DimensionMismatch { expected, found });
    }
    Ok(())
}

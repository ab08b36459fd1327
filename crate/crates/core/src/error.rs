use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure category, used by front ends to pick exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("schema column `{0}` not found in input header")]
    MissingColumn(String),

    #[error("input file {0} is empty")]
    EmptyFile(PathBuf),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model format error: {0}")]
    Format(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Schema(_) => ErrorKind::Config,
            Error::MissingColumn(_)
            | Error::EmptyFile(_)
            | Error::Csv(_)
            | Error::InvalidInput(_)
            | Error::ColumnMismatch(_)
            | Error::Format(_) => ErrorKind::Data,
            Error::Numerical(_) => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

use std::path::Path;

use sentrisk::ErrorKind;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;
pub const EXIT_IO: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] sentrisk::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(sentrisk::Error::Io(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(sentrisk::Error::Csv(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => "config",
                ErrorKind::Data => "data",
                ErrorKind::Numerical => "numerical",
                ErrorKind::Io => "io",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => EXIT_CONFIG,
            "data" => EXIT_DATA,
            "numerical" => EXIT_NUMERICAL,
            _ => EXIT_IO,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable form written to `error.json` and stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl ErrorRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error record serializes")
    }

    /// Best effort: a failure to write the record must not mask the error.
    pub fn write_to(&self, dir: &Path) {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), self.to_json() + "\n");
        }
    }
}

/// Data error for malformed pipeline artifacts.
pub(crate) fn bad_artifact(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Core(sentrisk::Error::InvalidInput(format!("{}: {msg}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_kind() {
        let cases: Vec<(CliError, i32)> = vec![
            (CliError::Config("x".into()), EXIT_CONFIG),
            (sentrisk::Error::Schema("x".into()).into(), EXIT_CONFIG),
            (sentrisk::Error::MissingColumn("x".into()).into(), EXIT_DATA),
            (sentrisk::Error::Numerical("x".into()).into(), EXIT_NUMERICAL),
            (std::io::Error::other("x").into(), EXIT_IO),
        ];
        for (e, code) in cases {
            assert_eq!(e.exit_code(), code, "{e}");
        }
    }

    #[test]
    fn record_is_json() {
        let r = CliError::Config("bad alpha".into()).record();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["kind"], "config");
        assert_eq!(v["exit_code"], 3);
        assert_eq!(v["message"], "config error: bad alpha");
    }
}

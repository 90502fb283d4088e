use std::path::PathBuf;

use thiserror::Error;

/// Failure to read or interpret an input file or field.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("invalid {what}: {value:?}")]
    InvalidValue { what: &'static str, value: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}, row {row}: {message}", path.display())]
    Row { path: PathBuf, row: u64, message: String },

    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
}

impl ParseError {
    pub fn invalid_value(what: &'static str, value: impl Into<String>) -> Self {
        ParseError::InvalidValue {
            what,
            value: value.into(),
        }
    }

    /// The offending file, when known.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            ParseError::InvalidValue { .. } => None,
            ParseError::Io { path, .. } | ParseError::Row { path, .. } | ParseError::File { path, .. } => Some(path),
        }
    }

    /// 1-based line number in the file; the header is line 1.
    pub fn row(&self) -> Option<u64> {
        match self {
            ParseError::Row { row, .. } => Some(*row),
            _ => None,
        }
    }
}

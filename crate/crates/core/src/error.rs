use std::path::PathBuf;

use thiserror::Error;

use crate::sql::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed record in an interchange file. `line` is 1-based; 0 means
    /// the location is not tied to a single line.
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("line {line}: unknown table `{table_id}`")]
    UnknownTable { table_id: String, line: usize },

    #[error("line {line}: invalid gold query: {message}")]
    InvalidGold { line: usize, message: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("bad distribution for example `{example_id}` step {step}: {message}")]
    Distribution {
        example_id: String,
        step: usize,
        message: String,
    },

    #[error("scorer violated its contract: {0}")]
    ScorerViolation(String),

    #[error("training set is empty or has no gold queries")]
    EmptyTraining,

    #[error("every training instance has an all-zero feature vector")]
    DegenerateFeatures,

    #[error("no viable candidate: {0}")]
    NoViableCandidate(String),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Format { .. }
            | Error::Parse(_)
            | Error::Distribution { .. }
            | Error::InvalidTable(_)
            | Error::EmptyTraining
            | Error::DegenerateFeatures => 2,
            Error::UnknownTable { .. } | Error::InvalidGold { .. } => 3,
            Error::ScorerViolation(_) | Error::NoViableCandidate(_) => 4,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants split into two families that map onto process exit codes:
/// input/configuration problems (exit 2) and evaluation-time failures such
/// as an unreachable backend (exit 1). See [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: duplicate record_id {record_id:?} on lines {first_line} and {second_line}")]
    DuplicateRecord {
        path: PathBuf,
        record_id: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("invalid record {record_id:?}: {message}")]
    InvalidRecord { record_id: String, message: String },

    #[error("invalid candidate distribution for {record_id:?}: {message}")]
    InvalidDistribution { record_id: String, message: String },

    #[error("record/distribution mismatch: record {record:?} vs distribution {distribution:?}")]
    RecordMismatch {
        record: String,
        distribution: String,
    },

    #[error("inputs are not keyed identically: {0}")]
    KeyMismatch(String),

    #[error("record {record_id:?} has not been assigned a popularity bucket")]
    Unpartitioned { record_id: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("k={k} exceeds the candidate depth {available} available for record {record_id:?}")]
    InsufficientDepth {
        k: usize,
        available: usize,
        record_id: String,
    },

    #[error("backend supports at most {max} top logprobs but {requested} were requested")]
    Capability { requested: usize, max: usize },

    #[error("backend returned no candidates for {record_id:?}")]
    NoCandidates { record_id: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("response schema violation: {0}")]
    Schema(String),

    #[error("{backend} backend cannot serve this request: {message}")]
    Unsupported {
        backend: &'static str,
        message: String,
    },

    #[error("record {record_id:?}: {source}")]
    Record {
        record_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid mock spec: {0}")]
    MockSpec(String),

    #[error("server error: {0}")]
    Server(String),

    #[error("{0} record(s) failed")]
    RecordFailures(usize),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Wraps an error with the record it was raised for.
    pub fn for_record(self, record_id: &str) -> Self {
        match self {
            Error::Record { .. } => self,
            other => Error::Record {
                record_id: record_id.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 2 for input/config errors, 1 for evaluation-time failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Transport(_)
            | Error::HttpStatus { .. }
            | Error::Schema(_)
            | Error::NoCandidates { .. }
            | Error::Unsupported { .. }
            | Error::Server(_)
            | Error::RecordFailures(_) => 1,
            Error::Record { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

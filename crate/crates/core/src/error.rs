use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("utterance {utterance}: {msg}")]
    Structure { utterance: String, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cannot resolve annotation {dialogue_id}/{utterance_id}: no such utterance")]
    Resolution {
        dialogue_id: String,
        utterance_id: String,
    },

    #[error("alignment error for {dialogue_id}/{utterance_id}: {msg}")]
    Alignment {
        dialogue_id: String,
        utterance_id: String,
        msg: String,
    },

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::Parse { .. }
            | Error::Structure { .. }
            | Error::Validation(_)
            | Error::Resolution { .. }
            | Error::Alignment { .. }
            | Error::Undefined(_)
            | Error::Degenerate(_)
            | Error::Json(_) => 2,
            Error::Io { source, .. } => match source.kind() {
                io::ErrorKind::NotFound | io::ErrorKind::InvalidData => 2,
                _ => 3,
            },
        }
    }
}

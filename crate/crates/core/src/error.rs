use thiserror::Error;

pub type Result<T, E = EdbnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EdbnError {
    #[error("empty log")]
    EmptyLog,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown variable: {0}")]
    UnknownVariable(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("model version error: {0}")]
    ModelVersion(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EdbnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EdbnError::InvalidArgument(msg.into())
    }
}

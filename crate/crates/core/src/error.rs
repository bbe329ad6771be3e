use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what}: line {line}: {message}")]
    Parse { what: String, line: usize, message: String },

    #[error("invalid stop word entry {0:?}")]
    InvalidStopword(String),

    // document model
    #[error("document has no visible text")]
    EmptyDocument,
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("span {start}..{end} out of range for text of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    // metric catalog
    #[error("duplicate metric name {0:?}")]
    DuplicateMetricName(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
    #[error("unknown data type {0:?}")]
    UnknownDataType(String),

    // embeddings
    #[error("vector header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("dimension mismatch at line {line}: expected {expected}, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("vector table has no entries")]
    EmptyVocabulary,

    // answerer
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("remote answerer unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote answerer timed out after {0} ms")]
    RemoteTimeout(u64),
    #[error("remote answerer returned a malformed response: {0}")]
    RemoteMalformedResponse(String),

    // pipelines
    #[error("metric {0:?} has no usable keywords after preparation")]
    EmptyKeywords(String),

    // evaluation
    #[error("annotation line {line}: text {recorded:?} does not match document text {actual:?}")]
    SpanTextMismatch {
        line: usize,
        recorded: String,
        actual: String,
    },

    #[error("annotation line {line}: invalid span: {message}")]
    InvalidAnnotation { line: usize, message: String },

    // records
    #[error("record {0} has already been reviewed")]
    AlreadyReviewed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for failures of an external answering backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::RemoteUnavailable(_) | Error::RemoteTimeout(_) | Error::RemoteMalformedResponse(_)
        )
    }
}

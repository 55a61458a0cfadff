use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the pipeline.
///
/// Variants fall into two families. Validation errors describe bad input
/// (malformed files, violated invariants, unsatisfiable preconditions) and are
/// reported by the CLI with exit code 3. Everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Line { path: String, line: usize, message: String },

    #[error("duplicate doc_id(s): {}", .0.join(", "))]
    DuplicateDocIds(Vec<String>),

    #[error("duplicate annotation key at line {line}: ({annotator_id}, {abstract_id}, {term})")]
    DuplicateAnnotation {
        line: usize,
        annotator_id: String,
        abstract_id: String,
        term: String,
    },

    #[error("rating {0} outside the 1-5 scale")]
    RatingOutOfRange(i64),

    #[error("missing path: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("term '{0}' has no tokens")]
    EmptyTerm(String),

    #[error("zero probability for term '{0}'; use alpha > 0")]
    ZeroProbability(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("feature '{feature}': {source}")]
    Feature {
        feature: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("feature mismatch: model expects {expected:?}, got {actual:?}")]
    FeatureMismatch { expected: Vec<String>, actual: Vec<String> },

    #[error("annotator {0} has a single class in its training rows")]
    SingleClass(String),

    #[error("insufficient rows: need {required}, pool has {available}")]
    InsufficientRows { required: usize, available: usize },

    #[error("train/test leakage: {0}")]
    Leakage(String),

    #[error("unsupported model format_version {found} (max {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("missing prompt slot: {0}")]
    MissingSlot(String),

    #[error("unparseable response after {attempts} attempt(s): {response:?}")]
    Unparseable { attempts: usize, response: String },

    #[error("authentication error: {0}")]
    Auth(String),

    #[error("request failed after {attempts} attempt(s): {message}")]
    RetriesExhausted { attempts: usize, message: String },

    #[error("transport error on attempt {attempt}: {message}")]
    Transport { attempt: usize, message: String },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn in_feature(self, feature: &'static str) -> Self {
        Error::Feature {
            feature,
            source: Box::new(self),
        }
    }

    /// True for errors caused by invalid input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_)
            | Error::Line { .. }
            | Error::DuplicateDocIds(_)
            | Error::DuplicateAnnotation { .. }
            | Error::RatingOutOfRange(_)
            | Error::MissingPath(_)
            | Error::EmptyTerm(_)
            | Error::Empty(_)
            | Error::FormatVersion { .. }
            | Error::Config(_) => true,
            Error::Stage { source, .. } | Error::Feature { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

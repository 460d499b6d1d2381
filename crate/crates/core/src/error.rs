use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the matcher pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("provider mismatch: expected `{expected}`, got `{actual}`")]
    ProviderMismatch { expected: String, actual: String },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("vector contains a non-finite value")]
    NonFinite,

    #[error("empty input")]
    EmptyInput,

    #[error("text is empty or has no usable tokens")]
    EmptyText,

    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("provider `{0}` is already registered")]
    DuplicateProvider(String),

    #[error("unknown provider `{0}`")]
    UnknownProvider(String),

    #[error("enrichment provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("unsupported language: {0}")]
    UnsupportedLanguage(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown review `{0}`")]
    UnknownReview(String),

    #[error("unknown issue #{0}")]
    UnknownIssue(u64),

    #[error("no embeddings stored for provider `{0}`")]
    NoEmbeddings(String),

    #[error("authentication failed: {0}")]
    AuthFailure(String),

    #[error("network failure: {0}")]
    Network(String),

    #[error("rate limited (retry after {retry_after:?}s)")]
    RateLimited { retry_after: Option<u64> },

    #[error("no match result for review `{0}`")]
    MissingResult(String),

    #[error("gold set is empty")]
    EmptyGoldSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("workspace schema version {found} is not supported (expected {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("workspace is locked by another writer ({0})")]
    WorkspaceLocked(PathBuf),

    #[error("workspace not initialized at {0}")]
    NotAWorkspace(PathBuf),

    #[error("inconsistent report: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, shared by CLI JSON output and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ProviderMismatch { .. } => "provider_mismatch",
            Error::ZeroVector => "zero_vector",
            Error::NonFinite => "non_finite",
            Error::EmptyInput => "empty_input",
            Error::EmptyText => "empty_text",
            Error::BackendUnavailable(_) => "backend_unavailable",
            Error::DuplicateProvider(_) => "duplicate_provider",
            Error::UnknownProvider(_) => "unknown_provider",
            Error::ProviderUnavailable(_) => "enrichment_unavailable",
            Error::UnsupportedLanguage(_) => "unsupported_language",
            Error::Parse { .. } => "parse_error",
            Error::DuplicateId(_) => "duplicate_id",
            Error::UnknownReview(_) => "unknown_review",
            Error::UnknownIssue(_) => "unknown_issue",
            Error::NoEmbeddings(_) => "no_embeddings",
            Error::AuthFailure(_) => "auth_failure",
            Error::Network(_) => "network_failure",
            Error::RateLimited { .. } => "rate_limited",
            Error::MissingResult(_) => "missing_result",
            Error::EmptyGoldSet => "empty_gold_set",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SchemaVersion { .. } => "schema_version",
            Error::WorkspaceLocked(_) => "workspace_locked",
            Error::NotAWorkspace(_) => "not_a_workspace",
            Error::Inconsistent(_) => "inconsistent_report",
            Error::Io(_) => "storage_error",
            Error::Json(_) => "storage_error",
        }
    }

    pub fn is_network(&self) -> bool {
        matches!(
            self,
            Error::Network(_) | Error::AuthFailure(_) | Error::RateLimited { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use serde::Serialize;
use sse_core::style_codec::RegionId;
use sse_core::CoreError;
use thiserror::Error;

/// A request field that failed validation, addressed by a JSON path such as
/// `semantic_edits[2].class` or `styles.thing:3`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    /// Unparseable input.
    #[error("malformed request: {0}")]
    Malformed(String),

    #[error("invalid request: {}", describe(.0))]
    Invalid(Vec<FieldError>),

    /// Fully erased regions without a style assignment.
    #[error("fully erased regions need a style assignment: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Orphans(Vec<RegionId>),

    #[error("{0} not found")]
    NotFound(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

fn describe(fields: &[FieldError]) -> String {
    fields.iter().map(|f| format!("{}: {}", f.path, f.message)).collect::<Vec<_>>().join("; ")
}

impl ServiceError {
    pub fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError::Invalid(vec![FieldError::new(path, message)])
    }

    /// HTTP status the error maps to.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Malformed(_) => 400,
            ServiceError::Invalid(_) | ServiceError::Orphans(_) => 422,
            ServiceError::NotFound(_) => 404,
            ServiceError::Core(CoreError::OrphanRegions(_)) => 422,
            ServiceError::Core(_) => 500,
        }
    }

    /// Field paths of a validation failure; orphans map to `styles.<region>`.
    pub fn fields(&self) -> Vec<FieldError> {
        match self {
            ServiceError::Invalid(f) => f.clone(),
            ServiceError::Orphans(ids) | ServiceError::Core(CoreError::OrphanRegions(ids)) => {
                ids.iter().map(|id| FieldError::new(format!("styles.{id}"), "fully erased region needs a style reference")).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn orphans(&self) -> Vec<RegionId> {
        match self {
            ServiceError::Orphans(ids) | ServiceError::Core(CoreError::OrphanRegions(ids)) => ids.clone(),
            _ => Vec::new(),
        }
    }
}

/// JSON body of an error response.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub status: u16,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orphans: Vec<RegionId>,
}

impl From<&ServiceError> for ErrorBody {
    fn from(e: &ServiceError) -> Self {
        ErrorBody { error: ErrorDetail { status: e.status(), message: e.to_string(), fields: e.fields(), orphans: e.orphans() } }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

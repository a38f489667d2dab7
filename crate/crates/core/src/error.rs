use thiserror::Error;

use crate::style_codec::RegionId;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] sse_tensor::TensorError),

    #[error("{what}: {msg}")]
    Invalid { what: &'static str, msg: String },

    #[error("fully erased regions without a style source: {}", list_regions(.0))]
    OrphanRegions(Vec<RegionId>),

    #[error("no style entry for region {0}")]
    MissingRegion(RegionId),

    #[error("{0}")]
    Format(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn list_regions(ids: &[RegionId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> CoreError {
    CoreError::Invalid { what, msg: msg.into() }
}

impl From<png::DecodingError> for CoreError {
    fn from(e: png::DecodingError) -> Self {
        CoreError::Format(format!("png decode: {e}"))
    }
}

impl From<png::EncodingError> for CoreError {
    fn from(e: png::EncodingError) -> Self {
        CoreError::Format(format!("png encode: {e}"))
    }
}

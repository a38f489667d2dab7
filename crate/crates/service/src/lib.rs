//! Interactive editing on top of `sse-core`: request-level edits, panoramas,
//! the HTTP service used by the browser editor, and the `sse` command line.

pub mod edit;
pub mod error;
pub mod http;
pub mod panorama;
pub mod store;

pub use error::{Result, ServiceError};

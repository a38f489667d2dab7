//! Evaluation: Fréchet distance over frozen random features ("desk-FID"),
//! segmentation scores against a palette oracle, and output diversity.
//!
//! Desk-FID values are only comparable between runs that share the
//! extractor seed and the evaluation corpus; they say nothing on the scale
//! of Inception-based FID.

mod diversity;
mod eval;
mod fid;
mod segment;

pub use diversity::diversity_score;
pub use eval::{evaluate, image_features, orphan_references, EvalOptions, EvalReport, KindReport};
pub use fid::{frechet_distance, FeatureStats};
pub use segment::{median_smooth, miou_and_accuracy, oracle_segment, ConfusionMatrix, Scope, SegmentationScores, MEDIAN_CENTER_WEIGHT};

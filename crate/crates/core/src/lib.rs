//! Semantic scene editing by inpainting with per-region style codes.
//!
//! Synthetic labeled scenes ([`shapeworld`]), erase masks ([`maskgen`]),
//! style encoding ([`style_codec`]), the generator pyramid ([`generator`]),
//! adversarial training ([`training`]) and evaluation ([`metrics`]).
//! Model code is generic over the scalar; the aliases below fix `f32`.

pub mod convert;
pub mod error;
pub mod generator;
pub mod maskgen;
pub mod metrics;
pub mod model;
pub mod shapeworld;
pub mod style_codec;
pub mod training;

pub use error::{CoreError, Result};

/// The inpainting model in single precision.
pub type Model = model::InpaintModel<f32>;
/// The trainer in single precision.
pub type ModelTrainer = training::Trainer<f32>;
/// The frozen feature extractor in single precision.
pub type Extractor = training::PerceptualExtractor<f32>;

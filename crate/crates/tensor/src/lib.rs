//! Dense tensors, a gradient tape, and the layer primitives used by the
//! style encoder, generators, and discriminators.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*32`
//! aliases below are what models use.

mod error;
mod graph;
mod scalar;
mod tensor;

pub mod gradcheck;
pub mod io;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;

pub use error::{Result, TensorError};
pub use graph::{BackwardFn, Graph, Var};
pub use ops::Resample;
pub use params::{Binder, LayerParams, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Graph32 = Graph<f32>;
pub type ParamStore32 = ParamStore<f32>;

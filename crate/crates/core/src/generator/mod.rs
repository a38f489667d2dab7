//! Coarse-to-fine generator pyramid: gated-conv encoder-decoders whose
//! normalization layers are modulated by the layout and the region styles.

mod blocks;
mod checkpoint;
mod config;
mod pyramid;
mod stage;

pub use blocks::{fuse, ConvBlock, FusedNorm, GatedConv, ModulationInputs, ModulationMaps, ModulationPyramid, MODULATION_GAIN};
pub use checkpoint::{fnv1a, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{scaled_channels, PyramidConfig, DECODER_SCHEDULES, ENCODER_SCHEDULES};
pub use pyramid::{composite, merge, scale_inputs, Generator, GeneratorInputs};
pub use stage::{StageNet, STAGE_INPUT_CHANNELS};

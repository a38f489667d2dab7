//! Per-region style codes pooled from visible pixels only, a gate driven by
//! each region's visible fraction, and fallbacks for regions erased entirely.

mod encode;
mod encoder;
mod gate;
mod pool;
mod region;
mod table;

pub use encode::{EncodedStyles, ExternalReference, Fallback, StyleCodec, StyleRequest};
pub use encoder::{StyleEncoderNet, DECODER_CHANNELS, ENCODER_CHANNELS, ENCODER_INPUT_CHANNELS};
pub use gate::{ValidRatioGate, GATE_HIDDEN};
pub use pool::{masked_region_pool, region_broadcast, region_pool_conv, PooledStyles};
pub use region::{reference_candidates, region_map, RegionCoverage, RegionId, RegionLayout};
pub use table::{decode_f32_base64, encode_f32_base64, StyleEntry, StyleSource, StyleTable};

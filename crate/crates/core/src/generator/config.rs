use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Full-width encoder channels per stage: first conv, downsampling blocks, final conv.
pub const ENCODER_SCHEDULES: [&[usize]; 3] = [
    &[32, 64, 128, 128, 256, 256, 512],
    &[32, 64, 128, 128, 256, 256, 512, 512],
    &[32, 64, 128, 128, 256, 256, 512, 512, 1024],
];

/// Full-width decoder block channels per stage (the RGB head is separate).
pub const DECODER_SCHEDULES: [&[usize]; 3] = [
    &[256, 128, 64, 32, 32],
    &[512, 256, 128, 64, 32, 32],
    &[512, 256, 256, 128, 64, 32, 32],
];

/// Channel count scaled by a width factor, at least 1.
pub fn scaled_channels(base: usize, width: f64) -> usize {
    ((base as f64 * width).round() as usize).max(1)
}

/// Shape of the three-stage generator pyramid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    /// Final (stage 3) resolution; stages run at 1/4, 1/2 and 1×.
    pub resolution: usize,
    /// Downsampling blocks per stage. Full-size schedules use 5, 6, 7.
    pub down_blocks: [usize; 3],
    pub width: f64,
    pub num_classes: usize,
    pub style_dim: usize,
    pub use_style: bool,
    /// When false only the last stage runs, directly at full resolution.
    pub multiscale: bool,
}

impl PyramidConfig {
    /// 256×256 with the full channel schedules.
    pub fn full(num_classes: usize) -> Self {
        Self { resolution: 256, down_blocks: [5, 6, 7], width: 1.0, num_classes, style_dim: 128, use_style: true, multiscale: true }
    }

    /// 64×64 at quarter width.
    pub fn desk(num_classes: usize) -> Self {
        Self { resolution: 64, down_blocks: [3, 4, 5], width: 0.25, ..Self::full(num_classes) }
    }

    /// 32×32 at quarter width.
    pub fn smoke(num_classes: usize) -> Self {
        Self { resolution: 32, down_blocks: [2, 3, 4], width: 0.25, ..Self::full(num_classes) }
    }

    pub fn stage_resolution(&self, stage: usize) -> usize {
        self.resolution >> (2 - stage)
    }

    pub fn active_stages(&self) -> std::ops::Range<usize> {
        if self.multiscale {
            0..3
        } else {
            2..3
        }
    }

    /// Channels of the modulation condition: one-hot classes, mask, edges.
    pub fn cond_channels(&self) -> usize {
        self.num_classes + 2
    }

    pub fn encoder_channels(&self, stage: usize) -> Vec<usize> {
        let n = self.down_blocks[stage];
        let base = ENCODER_SCHEDULES[stage];
        (0..n + 2).map(|i| scaled_channels(base.get(i).copied().unwrap_or(base[base.len() - 1]), self.width)).collect()
    }

    pub fn decoder_channels(&self, stage: usize) -> Vec<usize> {
        let n = self.down_blocks[stage];
        let base = DECODER_SCHEDULES[stage];
        let tail: Vec<usize> = if n <= base.len() {
            base[base.len() - n..].to_vec()
        } else {
            std::iter::repeat(base[0]).take(n - base.len()).chain(base.iter().copied()).collect()
        };
        tail.into_iter().map(|c| scaled_channels(c, self.width)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width <= 1.0) {
            return Err(invalid("pyramid config", format!("width {} outside (0, 1]", self.width)));
        }
        if self.num_classes == 0 || self.style_dim == 0 {
            return Err(invalid("pyramid config", "num_classes and style_dim must be positive"));
        }
        for k in self.active_stages() {
            let res = self.stage_resolution(k);
            let n = self.down_blocks[k];
            if n == 0 || res % (1 << n) != 0 || res >> n < 2 {
                return Err(invalid(
                    "pyramid config",
                    format!("stage {} at {res}×{res} cannot take {n} downsampling blocks (needs a bottleneck of at least 2×2)", k + 1),
                ));
            }
        }
        if self.resolution % 4 != 0 {
            return Err(invalid("pyramid config", format!("resolution {} not divisible by 4", self.resolution)));
        }
        Ok(())
    }
}

use sse_tensor::nn::Conv2d;
use sse_tensor::{Binder, ParamStore, Scalar, Var};

use crate::error::{invalid, Result};
use crate::generator::scaled_channels;

pub const ENCODER_CHANNELS: [usize; 6] = [16, 32, 64, 128, 256, 512];
pub const DECODER_CHANNELS: [usize; 4] = [512, 256, 256, 256];
/// Input: erased RGB plus the mask channel.
pub const ENCODER_INPUT_CHANNELS: usize = 4;
const DOWNS: usize = 4;

/// U-shaped style encoder: a 3×3 conv, four stride-2 downsamplings, a
/// bottleneck conv, four upsampling convs with skip connections, and a final
/// 3×3 conv to the style length. Every conv but the last is followed by
/// instance norm and leaky ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleEncoderNet {
    pub style_dim: usize,
    pub width: f64,
    enc: Vec<Conv2d>,
    bottleneck: Conv2d,
    ups: Vec<Conv2d>,
    head: Conv2d,
}

impl StyleEncoderNet {
    pub fn new(prefix: &str, style_dim: usize, width: f64) -> Self {
        let c: Vec<usize> = ENCODER_CHANNELS.iter().map(|&c| scaled_channels(c, width)).collect();
        let mut enc = vec![Conv2d::new(format!("{prefix}.enc0"), ENCODER_INPUT_CHANNELS, c[0], 3, 1)];
        for i in 1..=DOWNS {
            enc.push(Conv2d::new(format!("{prefix}.enc{i}"), c[i - 1], c[i], 3, 2));
        }
        let bottleneck = Conv2d::new(format!("{prefix}.bottleneck"), c[DOWNS], c[5], 3, 1);
        let mut ups = Vec::new();
        let mut prev = c[5];
        for (j, &u) in DECODER_CHANNELS.iter().enumerate() {
            let skip = c[DOWNS - 1 - j];
            let out = scaled_channels(u, width);
            ups.push(Conv2d::new(format!("{prefix}.up{}", j + 1), prev + skip, out, 3, 1));
            prev = out;
        }
        let head = Conv2d::new(format!("{prefix}.head"), prev, style_dim, 3, 1);
        Self { style_dim, width, enc, bottleneck, ups, head }
    }

    pub fn head(&self) -> &Conv2d {
        &self.head
    }

    /// Spatial extents must be divisible by 16.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << DOWNS;
        if h % f != 0 || w % f != 0 || h * w < 2 * f * f {
            return Err(invalid("style encoder", format!("input {h}×{w} must be a multiple of {f} with at least two bottleneck sites")));
        }
        Ok(())
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for conv in self.enc.iter().chain([&self.bottleneck]).chain(&self.ups).chain([&self.head]) {
            store.add_layer(conv.init(seed)?)?;
        }
        Ok(store)
    }

    fn block<'g, T: Scalar>(p: &Binder<'g, '_, T>, conv: &Conv2d, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(conv.forward(p, x)?.instance_norm()?.leaky_relu(0.2)?)
    }

    /// Features entering the final conv, `N × C × H × W`.
    pub fn features<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != ENCODER_INPUT_CHANNELS {
            return Err(invalid("style encoder", format!("expected N×{ENCODER_INPUT_CHANNELS}×H×W, got {shape:?}")));
        }
        self.check_input(shape[2], shape[3])?;
        let mut skips = Vec::with_capacity(DOWNS);
        let mut h = x;
        for conv in &self.enc {
            h = Self::block(p, conv, h)?;
            skips.push(h);
        }
        skips.pop();
        h = Self::block(p, &self.bottleneck, h)?;
        for conv in &self.ups {
            let skip = skips.pop().expect("one skip per upsampling");
            h = Self::block(p, conv, Var::concat(&[h.upsample2()?, skip], 1)?)?;
        }
        Ok(h)
    }
}

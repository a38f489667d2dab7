use sse_tensor::nn::Conv2d;
use sse_tensor::{Binder, ParamStore, Scalar, Var};

use super::blocks::{ConvBlock, ModulationPyramid};
use super::config::PyramidConfig;
use crate::error::{invalid, Result};

/// Stage input: image plus mask channel.
pub const STAGE_INPUT_CHANNELS: usize = 4;

/// Scale applied to the RGB head's initial weights.
pub const HEAD_GAIN: f64 = 0.1;

/// One encoder-decoder generator with skip connections and an RGB head.
#[derive(Clone, Debug, PartialEq)]
pub struct StageNet {
    pub index: usize,
    pub resolution: usize,
    /// First conv, the downsampling blocks, and the final encoder conv.
    pub encoder: Vec<ConvBlock>,
    pub decoder: Vec<ConvBlock>,
    pub head: Conv2d,
}

impl StageNet {
    pub fn new(config: &PyramidConfig, index: usize) -> Self {
        let name = format!("gen{}", index + 1);
        let n = config.down_blocks[index];
        let enc = config.encoder_channels(index);
        let dec = config.decoder_channels(index);
        let cond = config.cond_channels();
        let style = config.use_style.then_some(config.style_dim);
        let mut encoder = vec![ConvBlock::new(&format!("{name}.enc0"), STAGE_INPUT_CHANNELS, enc[0], 1, cond, style)];
        for i in 1..=n {
            encoder.push(ConvBlock::new(&format!("{name}.enc{i}"), enc[i - 1], enc[i], 2, cond, style));
        }
        encoder.push(ConvBlock::new(&format!("{name}.enc{}", n + 1), enc[n], enc[n + 1], 1, cond, style));
        let mut decoder = Vec::with_capacity(n);
        let mut prev = enc[n + 1];
        for j in 0..n {
            let skip = enc[n - 1 - j];
            decoder.push(ConvBlock::new(&format!("{name}.dec{}", j + 1), prev + skip, dec[j], 1, cond, style));
            prev = dec[j];
        }
        let head = Conv2d::new(format!("{name}.rgb"), prev, 3, 3, 1);
        Self { index, resolution: config.stage_resolution(index), encoder, decoder, head }
    }

    pub fn init<T: Scalar>(&self, seed: u64, store: &mut ParamStore<T>) -> Result<()> {
        for b in self.encoder.iter().chain(&self.decoder) {
            b.init(seed, store)?;
        }
        // a full-gain head drives tanh into saturation from the first step
        let mut head = self.head.init(seed)?;
        head.scale(&self.head.weight_name(), HEAD_GAIN)?;
        store.add_layer(head)?;
        Ok(())
    }

    /// `N × 4 × h × w` in, `N × 3 × h × w` in [-1, 1] out.
    pub fn forward<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        x: Var<'g, T>,
        mods: &ModulationPyramid<T>,
        styles: Option<&[Var<'g, T>]>,
    ) -> Result<Var<'g, T>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != STAGE_INPUT_CHANNELS || shape[2] != self.resolution {
            return Err(invalid(
                "generator stage",
                format!("stage {} expects N×{STAGE_INPUT_CHANNELS}×{r}×W, got {shape:?}", self.index + 1, r = self.resolution),
            ));
        }
        let n = self.decoder.len();
        let mut skips = Vec::with_capacity(n);
        let mut h = x;
        for (i, block) in self.encoder.iter().enumerate() {
            h = block.forward(p, h, mods, styles)?;
            if i < n {
                skips.push(h);
            }
        }
        for block in &self.decoder {
            let skip = skips.pop().expect("one skip per decoder block");
            h = block.forward(p, Var::concat(&[h.upsample2()?, skip], 1)?, mods, styles)?;
        }
        Ok(self.head.forward(p, h)?.tanh()?)
    }
}

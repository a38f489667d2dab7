use std::collections::BTreeMap;

use sse_tensor::nn::Conv2d;
use sse_tensor::ops::avgpool2_data;
use sse_tensor::{Binder, ParamStore, Scalar, Tensor, Var};

use crate::error::{invalid, Result};
use crate::style_codec::{region_broadcast, RegionCoverage};

/// `elu(conv_f(x)) ⊙ sigmoid(conv_g(x))` with two parallel 3×3 convolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedConv {
    pub feature: Conv2d,
    pub gate: Conv2d,
}

impl GatedConv {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            feature: Conv2d::new(format!("{name}.f"), in_channels, out_channels, 3, stride),
            gate: Conv2d::new(format!("{name}.g"), in_channels, out_channels, 3, stride),
        }
    }

    pub fn init<T: Scalar>(&self, seed: u64, store: &mut ParamStore<T>) -> Result<()> {
        store.add_layer(self.feature.init(seed)?)?;
        store.add_layer(self.gate.init(seed)?)?;
        Ok(())
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let f = self.feature.forward(p, x)?.elu()?;
        let g = self.gate.forward(p, x)?.sigmoid()?;
        Ok(f.mul(g)?)
    }
}

/// Condition maps at one spatial extent: `N × (K+2) × h × w` (one-hot layout,
/// binarised mask, edge map) and per-sample region coverage for the styles.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationInputs<T: Scalar> {
    pub cond: Tensor<T>,
    pub coverage: Vec<RegionCoverage>,
}

/// [`ModulationInputs`] at every extent from full resolution down to a floor,
/// keyed by height.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationPyramid<T: Scalar> {
    levels: BTreeMap<usize, ModulationInputs<T>>,
}

impl<T: Scalar> ModulationPyramid<T> {
    /// `onehot` is `N × K × H × W`, `mask` and `edges` are `N × 1 × H × W`.
    /// Lower levels area-average every map; the mask is re-binarised at 0.5.
    pub fn build(onehot: &Tensor<T>, mask: &Tensor<T>, edges: &Tensor<T>, coverage: Vec<RegionCoverage>, min_extent: usize) -> Result<Self> {
        let (n, k, mut h, mut w) = onehot.dims4()?;
        if mask.shape() != [n, 1, h, w] || edges.shape() != [n, 1, h, w] || coverage.len() != n {
            return Err(invalid("modulation inputs", "one-hot, mask, edges and coverage are not aligned"));
        }
        if coverage.iter().any(|c| (c.height, c.width) != (h, w)) {
            return Err(invalid("modulation inputs", "coverage extent differs from the layout"));
        }
        let (mut oh, mut mf, mut ed, mut cov) = (onehot.data().to_vec(), mask.data().to_vec(), edges.data().to_vec(), coverage);
        let mut levels = BTreeMap::new();
        loop {
            let hw = h * w;
            let mut cond = Vec::with_capacity(n * (k + 2) * hw);
            for s in 0..n {
                cond.extend_from_slice(&oh[s * k * hw..(s + 1) * k * hw]);
                cond.extend(mf[s * hw..(s + 1) * hw].iter().map(|&v| if v.f64() >= 0.5 { T::one() } else { T::zero() }));
                cond.extend_from_slice(&ed[s * hw..(s + 1) * hw]);
            }
            levels.insert(h, ModulationInputs { cond: Tensor::new(vec![n, k + 2, h, w], cond)?, coverage: cov.clone() });
            if h / 2 < min_extent.max(1) || h % 2 != 0 || w % 2 != 0 {
                break;
            }
            oh = avgpool2_data(&oh, n * k, h, w);
            mf = avgpool2_data(&mf, n, h, w);
            ed = avgpool2_data(&ed, n, h, w);
            cov = cov.iter().map(RegionCoverage::downsample).collect::<Result<_>>()?;
            (h, w) = (h / 2, w / 2);
        }
        Ok(Self { levels })
    }

    pub fn at(&self, height: usize) -> Result<&ModulationInputs<T>> {
        self.levels.get(&height).ok_or_else(|| invalid("modulation inputs", format!("no level of height {height}")))
    }

    pub fn batch(&self) -> usize {
        self.levels.values().next().map_or(0, |l| l.coverage.len())
    }
}

/// Intermediate maps of [`FusedNorm`], each `N × C × h × w`.
#[derive(Clone, Debug)]
pub struct ModulationMaps<'g, T: Scalar> {
    pub normalized: Var<'g, T>,
    pub gamma_c: Var<'g, T>,
    pub beta_c: Var<'g, T>,
    pub gamma_s1: Var<'g, T>,
    pub beta_s1: Var<'g, T>,
    pub gamma_s2: Var<'g, T>,
    pub beta_s2: Var<'g, T>,
}

/// Scale applied to the initial modulation kernels.
pub const MODULATION_GAIN: f64 = 0.1;

/// Context and style modulated instance norm.
///
/// `(γc, βc)` come from a 3×3 conv over the features before normalization;
/// `(γs1, βs1)` and `(γs2, βs2)` from two 1×1 heads over the condition maps
/// concatenated with the broadcast styles. Then
/// `γf = (1+γs2)·γc + βs2`, `βf = (1+γs1)·βc + βs1` and `y = γf·IN(x) + βf`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedNorm {
    pub channels: usize,
    pub cond_channels: usize,
    pub style_dim: Option<usize>,
    pub context: Conv2d,
    pub head1: Conv2d,
    pub head2: Conv2d,
}

impl FusedNorm {
    pub fn new(name: &str, channels: usize, cond_channels: usize, style_dim: Option<usize>) -> Self {
        let head_in = cond_channels + style_dim.unwrap_or(0);
        Self {
            channels,
            cond_channels,
            style_dim,
            context: Conv2d::new(format!("{name}.ctx"), channels, 2 * channels, 3, 1),
            head1: Conv2d::new(format!("{name}.s1"), head_in, 2 * channels, 1, 1),
            head2: Conv2d::new(format!("{name}.s2"), head_in, 2 * channels, 1, 1),
        }
    }

    /// The context γ bias starts at 1 and every kernel at [`MODULATION_GAIN`]
    /// of its usual scale, so the layer begins close to plain instance norm.
    /// Full-scale kernels compound the feature magnitude from block to block.
    pub fn init<T: Scalar>(&self, seed: u64, store: &mut ParamStore<T>) -> Result<()> {
        let mut ctx = self.context.init::<T>(seed)?;
        let bias = ctx.tensors.get_mut(&self.context.bias_name()).expect("conv init creates a bias");
        bias.data_mut()[..self.channels].iter_mut().for_each(|b| *b = T::one());
        for conv in [&self.head1, &self.head2] {
            let mut lp = conv.init::<T>(seed)?;
            lp.scale(&conv.weight_name(), MODULATION_GAIN)?;
            store.add_layer(lp)?;
        }
        ctx.scale(&self.context.weight_name(), MODULATION_GAIN)?;
        store.add_layer(ctx)?;
        Ok(())
    }

    /// Applies one 1×1 head. The style part of the kernel is applied to each
    /// region's code before broadcasting, which equals applying the full
    /// kernel to the concatenated maps.
    fn head<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        conv: &Conv2d,
        mods: &ModulationInputs<T>,
        styles: Option<&[Var<'g, T>]>,
    ) -> Result<Var<'g, T>> {
        let w = p.get(&conv.weight_name())?;
        let b = p.get(&conv.bias_name())?;
        let cond = p.graph().constant(mods.cond.clone());
        let out = if self.style_dim.is_some() { cond.conv2d(w.narrow(1, 0, self.cond_channels)?, Some(b), 1, 0)? } else { cond.conv2d(w, Some(b), 1, 0)? };
        let (Some(d), Some(styles)) = (self.style_dim, styles) else {
            if self.style_dim.is_some() {
                return Err(invalid("fused norm", "style codes required by this layer"));
            }
            return Ok(out);
        };
        if styles.len() != mods.coverage.len() {
            return Err(invalid("fused norm", format!("{} style sets for a batch of {}", styles.len(), mods.coverage.len())));
        }
        let ws = w.narrow(1, self.cond_channels, d)?.reshape(vec![2 * self.channels, d])?;
        let maps = styles
            .iter()
            .zip(&mods.coverage)
            .map(|(s, cov)| region_broadcast(s.linear(ws, None)?, cov))
            .collect::<Result<Vec<_>>>()?;
        Ok(out.add(Var::concat(&maps, 0)?)?)
    }

    pub fn maps<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        x: Var<'g, T>,
        mods: &ModulationInputs<T>,
        styles: Option<&[Var<'g, T>]>,
    ) -> Result<ModulationMaps<'g, T>> {
        let xs = x.shape();
        let cs = mods.cond.shape();
        if xs.len() != 4 || xs[1] != self.channels || xs[0] != cs[0] || xs[2..] != cs[2..] {
            return Err(invalid("fused norm", format!("features {xs:?} not aligned with condition {cs:?}")));
        }
        let c = self.channels;
        let ctx = self.context.forward(p, x)?;
        let h1 = self.head(p, &self.head1, mods, styles)?;
        let h2 = self.head(p, &self.head2, mods, styles)?;
        Ok(ModulationMaps {
            normalized: x.instance_norm()?,
            gamma_c: ctx.narrow(1, 0, c)?,
            beta_c: ctx.narrow(1, c, c)?,
            gamma_s1: h1.narrow(1, 0, c)?,
            beta_s1: h1.narrow(1, c, c)?,
            gamma_s2: h2.narrow(1, 0, c)?,
            beta_s2: h2.narrow(1, c, c)?,
        })
    }

    pub fn forward<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        x: Var<'g, T>,
        mods: &ModulationInputs<T>,
        styles: Option<&[Var<'g, T>]>,
    ) -> Result<Var<'g, T>> {
        fuse(&self.maps(p, x, mods, styles)?)
    }
}

/// Combine modulation maps into the layer output.
pub fn fuse<'g, T: Scalar>(m: &ModulationMaps<'g, T>) -> Result<Var<'g, T>> {
    let gamma_f = m.gamma_c.add(m.gamma_s2.mul(m.gamma_c)?)?.add(m.beta_s2)?;
    let beta_f = m.beta_c.add(m.gamma_s1.mul(m.beta_c)?)?.add(m.beta_s1)?;
    Ok(gamma_f.mul(m.normalized)?.add(beta_f)?)
}

/// Gated conv followed by fused normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub conv: GatedConv,
    pub norm: FusedNorm,
}

impl ConvBlock {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, stride: usize, cond_channels: usize, style_dim: Option<usize>) -> Self {
        Self {
            conv: GatedConv::new(&format!("{name}.conv"), in_channels, out_channels, stride),
            norm: FusedNorm::new(&format!("{name}.norm"), out_channels, cond_channels, style_dim),
        }
    }

    pub fn init<T: Scalar>(&self, seed: u64, store: &mut ParamStore<T>) -> Result<()> {
        self.conv.init(seed, store)?;
        self.norm.init(seed, store)
    }

    pub fn forward<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        x: Var<'g, T>,
        mods: &ModulationPyramid<T>,
        styles: Option<&[Var<'g, T>]>,
    ) -> Result<Var<'g, T>> {
        let h = self.conv.forward(p, x)?;
        let level = mods.at(h.shape()[2])?;
        self.norm.forward(p, h, level, styles)
    }
}

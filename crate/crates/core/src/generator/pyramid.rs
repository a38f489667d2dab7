use sse_tensor::ops::{avgpool2_data, upsample2_data};
use sse_tensor::{Binder, ParamStore, Scalar, Tensor, Var};

use super::blocks::ModulationPyramid;
use super::config::PyramidConfig;
use super::stage::StageNet;
use crate::convert::{edge_tensor, image_tensor, mask_tensor, onehot_tensor};
use crate::error::{invalid, Result};
use crate::maskgen::BinaryMask;
use crate::shapeworld::LabeledScene;
use crate::style_codec::{RegionCoverage, RegionLayout};

/// Batched full-resolution inputs of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorInputs<T: Scalar> {
    /// `N × 3 × H × W` in [-1, 1]. Values under the mask are never read.
    pub image: Tensor<T>,
    /// `N × 1 × H × W`, exactly 0 or 1.
    pub mask: Tensor<T>,
    pub onehot: Tensor<T>,
    pub edges: Tensor<T>,
    pub coverage: Vec<RegionCoverage>,
}

impl<T: Scalar> GeneratorInputs<T> {
    /// One sample per scene; the scene image is the input image.
    pub fn from_scenes(items: &[(&LabeledScene, &BinaryMask, &RegionLayout)], num_classes: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(invalid("generator inputs", "empty batch"));
        }
        let mut parts = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (scene, mask, layout) in items {
            if (mask.width, mask.height) != (scene.width, scene.height) || (layout.width, layout.height) != (scene.width, scene.height) {
                return Err(invalid("generator inputs", "scene, mask and region layout sizes differ"));
            }
            parts.0.push(image_tensor(scene.width, scene.height, &scene.image)?);
            parts.1.push(mask_tensor(mask));
            parts.2.push(onehot_tensor(scene, num_classes)?);
            parts.3.push(edge_tensor(scene));
            parts.4.push(layout.coverage());
        }
        Ok(Self {
            image: Tensor::concat(&parts.0, 0)?,
            mask: Tensor::concat(&parts.1, 0)?,
            onehot: Tensor::concat(&parts.2, 0)?,
            edges: Tensor::concat(&parts.3, 0)?,
            coverage: parts.4,
        })
    }

    pub fn batch(&self) -> usize {
        self.image.shape()[0]
    }

    fn validate(&self) -> Result<()> {
        let (n, c, h, w) = self.image.dims4()?;
        if c != 3 || self.mask.shape() != [n, 1, h, w] || self.edges.shape() != [n, 1, h, w] || self.coverage.len() != n {
            return Err(invalid("generator inputs", "image, mask, edges and coverage are not aligned"));
        }
        check_binary(&self.mask, "generator inputs")
    }
}

fn check_binary<T: Scalar>(mask: &Tensor<T>, what: &'static str) -> Result<()> {
    match mask.data().iter().position(|&m| m != T::zero() && m != T::one()) {
        Some(i) => Err(invalid(what, format!("mask value {} at {i} is not 0 or 1", mask.data()[i].f64()))),
        None => Ok(()),
    }
}

/// Image and mask at a scale `levels` halvings below the input.
///
/// The mask is erased where at least half of the covered full-resolution
/// pixels are erased. Visible pixels average only visible input pixels, so
/// no erased content leaks into any scale.
pub fn scale_inputs<T: Scalar>(image: &Tensor<T>, mask: &Tensor<T>, levels: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, mut h, mut w) = image.dims4()?;
    if mask.shape() != [n, 1, h, w] {
        return Err(invalid("scale inputs", format!("mask {:?} for image {:?}", mask.shape(), image.shape())));
    }
    check_binary(mask, "scale inputs")?;
    let hw = h * w;
    let vis: Vec<T> = mask.data().iter().map(|&m| T::one() - m).collect();
    let mut weight = vis.clone();
    let mut sum: Vec<T> = image.data().iter().enumerate().map(|(i, &v)| v * vis[(i / (c * hw)) * hw + i % hw]).collect();
    for _ in 0..levels {
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid("scale inputs", format!("{h}×{w} cannot be halved")));
        }
        sum = avgpool2_data(&sum, n * c, h, w);
        weight = avgpool2_data(&weight, n, h, w);
        (h, w) = (h / 2, w / 2);
    }
    let hw = h * w;
    let half = T::of(0.5);
    let erased: Vec<T> = weight.iter().map(|&a| if a <= half { T::one() } else { T::zero() }).collect();
    let img = if levels == 0 {
        sum
    } else {
        sum.iter()
            .enumerate()
            .map(|(i, &s)| {
                let a = weight[(i / (c * hw)) * hw + i % hw];
                if a <= half {
                    T::zero()
                } else {
                    s / a
                }
            })
            .collect()
    };
    Ok((Tensor::new(vec![n, c, h, w], img)?, Tensor::new(vec![n, 1, h, w], erased)?))
}

/// Per-pixel select: `generated` where `mask` is 1, `visible` where it is 0.
/// Visible pixels are copied, not blended, so they pass through bit-exactly.
pub fn merge<'g, T: Scalar>(generated: Var<'g, T>, visible: &Tensor<T>, mask: &Tensor<T>) -> Result<Var<'g, T>> {
    let gen = generated.value();
    let (n, c, h, w) = gen.dims4()?;
    if visible.shape() != gen.shape() || mask.shape() != [n, 1, h, w] {
        return Err(invalid("merge", format!("generated {:?}, visible {:?}, mask {:?}", gen.shape(), visible.shape(), mask.shape())));
    }
    check_binary(mask, "merge")?;
    let hw = h * w;
    let hole: Vec<bool> = mask.data().iter().map(|&m| m == T::one()).collect();
    let at = move |i: usize| hole[(i / (c * hw)) * hw + i % hw];
    let out = Tensor::from_fn(gen.shape().to_vec(), |i| if at(i) { gen.data()[i] } else { visible.data()[i] });
    let shape = gen.shape().to_vec();
    Ok(generated.graph().record("merge", &[generated], out, move |g, _| {
        Ok(vec![Some(Tensor::from_fn(shape.clone(), |i| if at(i) { g.data()[i] } else { T::zero() }))])
    })?)
}

/// Final image in [0, 1] HWC: the original where the mask is 0, the
/// generated sample elsewhere.
pub fn composite<T: Scalar>(original: &[f32], mask: &BinaryMask, generated: &Tensor<T>, index: usize) -> Result<Vec<f32>> {
    let out = crate::convert::tensor_image(generated, index)?;
    if out.len() != original.len() || original.len() != 3 * mask.data.len() {
        return Err(invalid("composite", "image, mask and output sizes differ"));
    }
    Ok(out
        .iter()
        .zip(original)
        .enumerate()
        .map(|(i, (&o, &src))| if mask.data[i / 3] == 1 { o } else { src })
        .collect())
}

/// The stage networks of the pyramid, coarse to fine.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub config: PyramidConfig,
    /// Only the active stages; stage 3 alone when multiscale is off.
    pub stages: Vec<StageNet>,
}

impl Generator {
    pub fn new(config: PyramidConfig) -> Result<Self> {
        config.validate()?;
        let stages = config.active_stages().map(|k| StageNet::new(&config, k)).collect();
        Ok(Self { config, stages })
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for s in &self.stages {
            s.init(seed, &mut store)?;
        }
        Ok(store)
    }

    fn halvings(&self, stage: &StageNet) -> usize {
        2 - stage.index
    }

    /// Ground-truth frames matching each stage output.
    pub fn targets<T: Scalar>(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (n, _, h, w) = image.dims4()?;
        let none = Tensor::zeros(vec![n, 1, h, w]);
        self.stages.iter().map(|s| Ok(scale_inputs(image, &none, self.halvings(s))?.0)).collect()
    }

    fn check_extent(&self, h: usize, w: usize) -> Result<()> {
        if h != self.config.resolution {
            return Err(invalid("generator", format!("canvas height {h} but the model runs at {}", self.config.resolution)));
        }
        for s in &self.stages {
            let f = 1usize << (self.halvings(s) + self.config.down_blocks[s.index]);
            if w % f != 0 {
                return Err(invalid("generator", format!("canvas width {w} not divisible by {f}")));
            }
        }
        Ok(())
    }

    /// Full-frame outputs of every active stage, coarse to fine, each
    /// `N × 3 × h_k × w_k` in [-1, 1]. `styles` holds one `R × D` code matrix
    /// per sample in layout order; it is required iff styles are enabled.
    pub fn forward<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        inputs: &GeneratorInputs<T>,
        styles: Option<&[Var<'g, T>]>,
    ) -> Result<Vec<Var<'g, T>>> {
        inputs.validate()?;
        let (_, _, h, w) = inputs.image.dims4()?;
        self.check_extent(h, w)?;
        if self.config.use_style != styles.is_some() {
            return Err(invalid("generator", "style codes must be given exactly when styles are enabled"));
        }
        let floor = self.stages.iter().map(|s| s.resolution >> self.config.down_blocks[s.index]).min().unwrap_or(1);
        let mods = ModulationPyramid::build(&inputs.onehot, &inputs.mask, &inputs.edges, inputs.coverage.clone(), floor)?;
        let g = p.graph();
        let mut outputs = Vec::with_capacity(self.stages.len());
        let mut prev: Option<(Var<'g, T>, Tensor<T>)> = None;
        for stage in &self.stages {
            let (visible, mask) = scale_inputs(&inputs.image, &inputs.mask, self.halvings(stage))?;
            let x = match prev {
                None => g.constant(visible),
                Some((o, prev_mask)) => {
                    // the coarse result fills every pixel erased at either scale
                    let (n, _, ph, pw) = prev_mask.dims4()?;
                    let up = upsample2_data(prev_mask.data(), n, ph, pw);
                    let fill = Tensor::from_fn(mask.shape().to_vec(), |i| if up[i] == T::one() { T::one() } else { mask.data()[i] });
                    merge(o.upsample2()?, &visible, &fill)?
                }
            };
            let out = stage.forward(p, Var::concat(&[x, g.constant(mask.clone())], 1)?, &mods, styles)?;
            outputs.push(out);
            prev = Some((out, mask));
        }
        Ok(outputs)
    }
}

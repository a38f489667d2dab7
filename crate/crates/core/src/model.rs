//! The complete inpainting model: style codec plus generator pyramid, with
//! checkpoint conversion and a single-scene inference helper.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sse_tensor::{Binder, Graph, ParamStore, Scalar, Tensor, Var};

use crate::convert::image_tensor;
use crate::error::{invalid, CoreError, Result};
use crate::generator::{composite, Checkpoint, Generator, GeneratorInputs, PyramidConfig};
use crate::maskgen::BinaryMask;
use crate::shapeworld::{LabeledScene, CATALOG_VERSION};
use crate::style_codec::{EncodedStyles, ExternalReference, Fallback, RegionId, RegionLayout, StyleCodec, StyleRequest, StyleTable};

/// Tensor-name prefix of model parameters inside a checkpoint.
pub const MODEL_SECTION: &str = "model/";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pyramid: PyramidConfig,
    /// Width factor of the style encoder's channel schedule.
    pub style_width: f64,
    pub use_gate: bool,
    pub catalog_version: u32,
}

impl ModelConfig {
    pub fn full(num_classes: usize) -> Self {
        Self { pyramid: PyramidConfig::full(num_classes), style_width: 1.0, use_gate: true, catalog_version: CATALOG_VERSION }
    }

    pub fn desk(num_classes: usize) -> Self {
        Self { pyramid: PyramidConfig::desk(num_classes), style_width: 0.125, ..Self::full(num_classes) }
    }

    pub fn smoke(num_classes: usize) -> Self {
        Self { pyramid: PyramidConfig::smoke(num_classes), style_width: 0.125, ..Self::full(num_classes) }
    }

    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        if !(self.style_width > 0.0 && self.style_width <= 1.0) {
            return Err(invalid("model config", format!("style width {} outside (0, 1]", self.style_width)));
        }
        if self.catalog_version != CATALOG_VERSION {
            return Err(invalid("model config", format!("catalog version {} but this build has {CATALOG_VERSION}", self.catalog_version)));
        }
        Ok(())
    }
}

/// One scene of a model batch. `image` is the scene image as a
/// `1 × 3 × H × W` tensor; pixels under the mask are never read except by the
/// `Original` fallback.
#[derive(Clone, Debug)]
pub struct Sample<'a, T: Scalar> {
    pub scene: &'a LabeledScene,
    pub image: &'a Tensor<T>,
    pub mask: &'a BinaryMask,
    pub layout: &'a RegionLayout,
    pub fallback: Fallback<'a, T>,
}

#[derive(Clone, Debug)]
pub struct ModelOutput<'g, T: Scalar> {
    /// Full frames of every active stage, coarse to fine.
    pub stages: Vec<Var<'g, T>>,
    /// Empty when styles are disabled.
    pub styles: Vec<EncodedStyles<'g, T>>,
}

impl<'g, T: Scalar> ModelOutput<'g, T> {
    pub fn last(&self) -> Var<'g, T> {
        *self.stages.last().expect("at least one stage")
    }
}

/// Where a fully erased region borrows its style at inference.
#[derive(Clone, Copy, Debug)]
pub struct StyleRef<'a> {
    pub scene: &'a LabeledScene,
    pub region: RegionId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// `H × W × 3` in [0, 1]; equal to the input wherever the mask is 0.
    pub image: Vec<f32>,
    pub table: Option<StyleTable>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintModel<T: Scalar> {
    pub config: ModelConfig,
    pub generator: Generator,
    pub codec: Option<StyleCodec>,
    pub params: ParamStore<T>,
}

impl<T: Scalar> InpaintModel<T> {
    fn parts(config: &ModelConfig) -> Result<(Generator, Option<StyleCodec>)> {
        config.validate()?;
        let p = &config.pyramid;
        let codec = p.use_style.then(|| StyleCodec::new(p.style_dim, config.style_width, config.use_gate));
        Ok((Generator::new(p.clone())?, codec))
    }

    fn fresh_params(generator: &Generator, codec: &Option<StyleCodec>, seed: u64) -> Result<ParamStore<T>> {
        let mut params = generator.init(seed)?;
        if let Some(c) = codec {
            params.extend(c.init(seed)?)?;
        }
        Ok(params)
    }

    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let (generator, codec) = Self::parts(&config)?;
        let params = Self::fresh_params(&generator, &codec, seed)?;
        Ok(Self { config, generator, codec, params })
    }

    /// Use existing parameters; names and shapes must match the config.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let (generator, codec) = Self::parts(&config)?;
        let expected = Self::fresh_params(&generator, &codec, 0)?;
        for (name, t) in expected.iter() {
            let got = params.get(name).map_err(|_| CoreError::Format(format!("parameter {name} missing")))?;
            if got.shape() != t.shape() {
                return Err(CoreError::Format(format!("parameter {name} has shape {:?}, expected {:?}", got.shape(), t.shape())));
            }
        }
        if let Some(extra) = params.names().find(|n| !expected.contains(n)) {
            return Err(CoreError::Format(format!("unexpected parameter {extra}")));
        }
        Ok(Self { config, generator, codec, params })
    }

    pub fn num_classes(&self) -> usize {
        self.config.pyramid.num_classes
    }

    pub fn resolution(&self) -> usize {
        self.config.pyramid.resolution
    }

    /// Config under `"model"` and parameters under [`MODEL_SECTION`].
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let tensors = self.params.iter().map(|(k, v)| (format!("{MODEL_SECTION}{k}"), v.cast::<f32>())).collect();
        Ok(Checkpoint { config: serde_json::json!({ "model": self.config }), tensors })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(
            ckpt.config.get("model").cloned().ok_or_else(|| CoreError::Format("checkpoint has no model config".into()))?,
        )?;
        let mut params = ParamStore::new();
        for (k, v) in ckpt.section(MODEL_SECTION) {
            params.insert(k, v.cast::<T>())?;
        }
        Self::from_params(config, params)
    }

    /// Encode styles and run the generator over a batch of equally sized scenes.
    pub fn forward<'g>(&self, p: &Binder<'g, '_, T>, samples: &[Sample<'_, T>]) -> Result<ModelOutput<'g, T>> {
        let styles = match &self.codec {
            Some(codec) => {
                let requests: Vec<StyleRequest<'_, T>> = samples
                    .iter()
                    .map(|s| StyleRequest { image: s.image, mask: s.mask, layout: s.layout, fallback: s.fallback.clone() })
                    .collect();
                codec.encode(p, &requests)?
            }
            None => Vec::new(),
        };
        let items: Vec<_> = samples.iter().map(|s| (s.scene, s.mask, s.layout)).collect();
        let inputs = GeneratorInputs::from_scenes(&items, self.num_classes())?;
        let codes: Vec<Var<'g, T>> = styles.iter().map(|s| s.styles).collect();
        let stages = self.generator.forward(p, &inputs, self.codec.as_ref().map(|_| codes.as_slice()))?;
        Ok(ModelOutput { stages, styles })
    }

    /// Inpaint one scene. `scene` carries the target layout and the input
    /// image; every region left without visible pixels needs a reference.
    pub fn infer(&self, scene: &LabeledScene, mask: &BinaryMask, refs: &BTreeMap<RegionId, StyleRef<'_>>) -> Result<Inference> {
        if scene.height != self.resolution() {
            return Err(invalid("inference", format!("scene height {} but the model runs at {}", scene.height, self.resolution())));
        }
        let image = image_tensor::<T>(scene.width, scene.height, &scene.image)?;
        let layout = RegionLayout::of_scene(scene)?;
        let ref_data = refs
            .iter()
            .map(|(&id, r)| Ok((id, image_tensor::<T>(r.scene.width, r.scene.height, &r.scene.image)?, RegionLayout::of_scene(r.scene)?, r.region)))
            .collect::<Result<Vec<_>>>()?;
        let references = ref_data.iter().map(|(id, img, lay, region)| (*id, ExternalReference { image: img, layout: lay, region: *region })).collect();
        let g = Graph::new();
        let p = Binder::new(&g, &self.params, false);
        let out = self.forward(
            &p,
            &[Sample { scene, image: &image, mask, layout: &layout, fallback: Fallback::References(references) }],
        )?;
        let image = composite(&scene.image, mask, &out.last().value(), 0)?;
        Ok(Inference { image, table: out.styles.first().map(EncodedStyles::to_table) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapeworld::generate_scene;

    #[test]
    fn checkpoint_round_trip_preserves_the_model() {
        let m = InpaintModel::<f32>::new(ModelConfig::smoke(7), 3).unwrap();
        let bytes = m.to_checkpoint().unwrap().to_bytes().unwrap();
        let back = InpaintModel::<f32>::from_checkpoint(&Checkpoint::read(&mut bytes.as_slice()).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn from_params_rejects_mismatched_sets() {
        let m = InpaintModel::<f32>::new(ModelConfig::smoke(7), 3).unwrap();
        let mut other = ModelConfig::smoke(7);
        other.pyramid.style_dim = 64;
        assert!(InpaintModel::from_params(other, m.params.clone()).is_err());
    }

    #[test]
    fn empty_mask_returns_the_input() {
        let m = InpaintModel::<f32>::new(ModelConfig::smoke(7), 1).unwrap();
        let scene = generate_scene(5, 32).unwrap();
        let out = m.infer(&scene, &BinaryMask::zeros(32, 32), &BTreeMap::new()).unwrap();
        assert_eq!(out.image, scene.image);
    }
}

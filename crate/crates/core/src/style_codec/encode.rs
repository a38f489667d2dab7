use std::collections::BTreeMap;

use sse_tensor::{Binder, ParamStore, Scalar, Tensor, Var};

use super::encoder::StyleEncoderNet;
use super::gate::ValidRatioGate;
use super::pool::{region_pool_conv, PooledStyles};
use super::region::{RegionId, RegionLayout};
use super::table::{StyleEntry, StyleSource, StyleTable};
use crate::convert::erased_input;
use crate::error::{invalid, CoreError, Result};
use crate::maskgen::BinaryMask;

/// A region of another scene whose style is borrowed for a fully erased region.
#[derive(Clone, Copy, Debug)]
pub struct ExternalReference<'a, T: Scalar> {
    /// `1 × 3 × H × W` in [-1, 1].
    pub image: &'a Tensor<T>,
    pub layout: &'a RegionLayout,
    pub region: RegionId,
}

/// Style source for regions with no visible pixels.
#[derive(Clone, Debug)]
pub enum Fallback<'a, T: Scalar> {
    /// Training: re-encode the request's own image without the mask.
    Original,
    /// Inference: one reference per fully erased region.
    References(BTreeMap<RegionId, ExternalReference<'a, T>>),
}

#[derive(Clone, Debug)]
pub struct StyleRequest<'a, T: Scalar> {
    /// `1 × 3 × H × W` in [-1, 1]. Pixels under the mask are never read
    /// except by the `Original` fallback.
    pub image: &'a Tensor<T>,
    pub mask: &'a BinaryMask,
    pub layout: &'a RegionLayout,
    pub fallback: Fallback<'a, T>,
}

/// Style codes of one scene, in layout order.
#[derive(Clone, Debug)]
pub struct EncodedStyles<'g, T: Scalar> {
    pub ids: Vec<RegionId>,
    /// `R × D`, after the gate when it is enabled.
    pub styles: Var<'g, T>,
    /// `R × D`, before the gate.
    pub raw: Var<'g, T>,
    /// Stored ratios: measured, or 1 for fallback entries.
    pub ratios: Vec<f64>,
    pub sources: Vec<StyleSource>,
}

impl<T: Scalar> EncodedStyles<'_, T> {
    pub fn to_table(&self) -> StyleTable {
        let v = self.styles.value();
        let d = v.shape()[1];
        let entries = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let style = v.data()[i * d..(i + 1) * d].iter().map(|x| x.f64() as f32).collect();
                (id, StyleEntry { style, valid_ratio: self.ratios[i] as f32, source: self.sources[i] })
            })
            .collect();
        StyleTable { style_dim: d, entries }
    }

    pub fn fallback_count(&self) -> usize {
        self.sources.iter().filter(|s| s.is_fallback()).count()
    }
}

/// Style encoder plus the optional valid-ratio gate.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCodec {
    pub encoder: StyleEncoderNet,
    pub gate: Option<ValidRatioGate>,
}

impl StyleCodec {
    pub fn new(style_dim: usize, width: f64, use_gate: bool) -> Self {
        Self {
            encoder: StyleEncoderNet::new("style.enc", style_dim, width),
            gate: use_gate.then(|| ValidRatioGate::new("style.gate", style_dim)),
        }
    }

    pub fn style_dim(&self) -> usize {
        self.encoder.style_dim
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut store = self.encoder.init(seed)?;
        if let Some(g) = &self.gate {
            store.extend(g.init(seed)?)?;
        }
        Ok(store)
    }

    /// Encode a batch of inputs of equal size through the encoder together and
    /// pool each with the final conv.
    fn pool_batch<'g, T: Scalar>(
        &self,
        p: &Binder<'g, '_, T>,
        inputs: Vec<Tensor<T>>,
        layouts: &[&RegionLayout],
        valid: &[Vec<bool>],
    ) -> Result<Vec<PooledStyles<'g, T>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let x = p.graph().constant(Tensor::concat(&inputs, 0)?);
        let feats = self.encoder.features(p, x)?;
        let head = self.encoder.head();
        let (w, b) = (p.get(&head.weight_name())?, p.get(&head.bias_name())?);
        (0..inputs.len())
            .map(|i| region_pool_conv(feats.narrow(0, i, 1)?, w, b, layouts[i], &valid[i]))
            .collect()
    }

    pub fn encode<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, requests: &[StyleRequest<'_, T>]) -> Result<Vec<EncodedStyles<'g, T>>> {
        let Some(first) = requests.first() else { return Ok(Vec::new()) };
        for r in requests {
            if r.image.shape() != first.image.shape() {
                return Err(invalid("encode styles", format!("batch mixes image shapes {:?} and {:?}", first.image.shape(), r.image.shape())));
            }
            if (r.layout.height, r.layout.width) != (r.mask.height, r.mask.width) {
                return Err(invalid("encode styles", "mask and region map sizes differ"));
            }
        }

        // orphans must all have a source before any work is done
        let valid: Vec<Vec<bool>> = requests.iter().map(|r| r.mask.valid()).collect();
        let counts: Vec<Vec<usize>> = requests.iter().zip(&valid).map(|(r, v)| r.layout.valid_counts(v)).collect::<Result<_>>()?;
        let mut missing = Vec::new();
        for (r, c) in requests.iter().zip(&counts) {
            if let Fallback::References(refs) = &r.fallback {
                missing.extend(r.layout.ids().iter().zip(c).filter(|(id, &n)| n == 0 && !refs.contains_key(id)).map(|(id, _)| *id));
            }
        }
        if !missing.is_empty() {
            return Err(CoreError::OrphanRegions(missing));
        }

        let inputs = requests.iter().map(|r| erased_input(r.image, r.mask)).collect::<Result<Vec<_>>>()?;
        let layouts: Vec<&RegionLayout> = requests.iter().map(|r| r.layout).collect();
        let pooled = self.pool_batch(p, inputs, &layouts, &valid)?;

        // training fallback: one unmasked pass over every image that has an orphan
        let needs_original: Vec<usize> = (0..requests.len())
            .filter(|&i| matches!(requests[i].fallback, Fallback::Original) && counts[i].contains(&0))
            .collect();
        let originals = {
            let inputs = needs_original
                .iter()
                .map(|&i| erased_input(requests[i].image, &BinaryMask::zeros(requests[i].mask.width, requests[i].mask.height)))
                .collect::<Result<Vec<_>>>()?;
            let lays: Vec<&RegionLayout> = needs_original.iter().map(|&i| requests[i].layout).collect();
            let all_valid: Vec<Vec<bool>> = lays.iter().map(|l| vec![true; l.pixels()]).collect();
            self.pool_batch(p, inputs, &lays, &all_valid)?
        };

        let mut out = Vec::with_capacity(requests.len());
        for (i, req) in requests.iter().enumerate() {
            let pool = &pooled[i];
            let measured = pool.valid_ratios();
            let ids = req.layout.ids().to_vec();
            let mut ratios = measured.clone();
            let mut sources = vec![StyleSource::ErasedImage; ids.len()];
            let raw = if !counts[i].contains(&0) {
                pool.styles
            } else {
                let mut rows = Vec::with_capacity(ids.len());
                for (j, &id) in ids.iter().enumerate() {
                    if counts[i][j] > 0 {
                        rows.push(pool.styles.narrow(0, j, 1)?);
                        continue;
                    }
                    ratios[j] = 1.0;
                    match &req.fallback {
                        Fallback::Original => {
                            let k = needs_original.iter().position(|&n| n == i).expect("orphaned request was re-encoded");
                            rows.push(originals[k].styles.narrow(0, j, 1)?);
                            sources[j] = StyleSource::OriginalImage;
                        }
                        Fallback::References(refs) => {
                            rows.push(self.encode_reference(p, &refs[&id])?);
                            sources[j] = StyleSource::ExternalReference;
                        }
                    }
                }
                Var::concat(&rows, 0)?
            };
            let styles = match &self.gate {
                Some(g) => g.apply(p, raw, &ratios)?,
                None => raw,
            };
            out.push(EncodedStyles { ids, styles, raw, ratios, sources });
        }
        Ok(out)
    }

    /// Style row (`1 × D`) of a reference region, pooled with every pixel valid.
    pub fn encode_reference<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, r: &ExternalReference<'_, T>) -> Result<Var<'g, T>> {
        let j = r
            .layout
            .position(r.region)
            .ok_or_else(|| invalid("style reference", format!("region {} not present in the reference scene", r.region)))?;
        let (w, h) = (r.layout.width, r.layout.height);
        let input = erased_input(r.image, &BinaryMask::zeros(w, h))?;
        let pooled = self.pool_batch(p, vec![input], &[r.layout], &[vec![true; w * h]])?;
        Ok(pooled[0].styles.narrow(0, j, 1)?)
    }
}

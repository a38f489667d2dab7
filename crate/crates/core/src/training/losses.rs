use sse_tensor::nn::Conv2d;
use sse_tensor::{Binder, Graph, ParamStore, Scalar, Tensor, Var};

use crate::error::{invalid, Result};

/// Discriminator hinge loss: `mean(relu(1 − real)) + mean(relu(1 + fake))`.
pub fn hinge_d<'g, T: Scalar>(real: Var<'g, T>, fake: Var<'g, T>) -> Result<Var<'g, T>> {
    let r = real.neg()?.add_scalar(1.0)?.relu()?.mean()?;
    let f = fake.add_scalar(1.0)?.relu()?.mean()?;
    Ok(r.add(f)?)
}

/// Generator hinge loss: `−mean(fake)`.
pub fn hinge_g<'g, T: Scalar>(fake: Var<'g, T>) -> Result<Var<'g, T>> {
    Ok(fake.mean()?.neg()?)
}

/// Mean absolute difference.
pub fn l1_loss<'g, T: Scalar>(x: Var<'g, T>, y: Var<'g, T>) -> Result<Var<'g, T>> {
    Ok(x.sub(y)?.abs()?.mean()?)
}

/// Channels of the four extractor stages.
pub const EXTRACTOR_CHANNELS: [usize; 4] = [16, 32, 64, 64];

/// Frozen random-weight feature extractor: four stride-2 3×3 convs with
/// leaky ReLU, weights fixed by a seed.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptualExtractor<T: Scalar> {
    pub seed: u64,
    convs: Vec<Conv2d>,
    params: ParamStore<T>,
}

impl<T: Scalar> PerceptualExtractor<T> {
    pub fn new(seed: u64) -> Result<Self> {
        let mut convs = Vec::new();
        let mut prev = 3;
        for (i, &c) in EXTRACTOR_CHANNELS.iter().enumerate() {
            convs.push(Conv2d::new(format!("percept.conv{i}"), prev, c, 3, 2));
            prev = c;
        }
        let mut params = ParamStore::new();
        for c in &convs {
            params.add_layer(c.init(seed)?)?;
        }
        Ok(Self { seed, convs, params })
    }

    pub fn feature_dim(&self) -> usize {
        EXTRACTOR_CHANNELS[EXTRACTOR_CHANNELS.len() - 1]
    }

    /// Activations after each stage for `N × 3 × H × W` input in [-1, 1].
    pub fn stages<'g>(&self, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        let p = Binder::new(x.graph(), &self.params, false);
        let mut h = x;
        let mut out = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            h = c.forward(&p, h)?.leaky_relu(0.2)?;
            out.push(h);
        }
        Ok(out)
    }

    /// `Σ_k mean |φ_k(x) − φ_k(y)|`.
    pub fn loss<'g>(&self, x: Var<'g, T>, y: Var<'g, T>) -> Result<Var<'g, T>> {
        if x.shape() != y.shape() {
            return Err(invalid("perceptual loss", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let (fx, fy) = (self.stages(x)?, self.stages(y)?);
        let mut total: Option<Var<'g, T>> = None;
        for (a, b) in fx.into_iter().zip(fy) {
            let term = l1_loss(a, b)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
        Ok(total.expect("extractor has stages"))
    }

    /// Globally pooled last-stage features, one row per sample.
    pub fn pooled_features(&self, images: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        let g = Graph::new();
        let last = *self.stages(g.constant(images.clone()))?.last().expect("extractor has stages");
        let v = last.value();
        let (n, c, h, w) = v.dims4()?;
        let hw = h * w;
        Ok((0..n)
            .map(|s| (0..c).map(|ch| v.data()[(s * c + ch) * hw..(s * c + ch + 1) * hw].iter().map(|x| x.f64()).sum::<f64>() / hw as f64).collect())
            .collect())
    }
}

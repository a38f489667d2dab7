use sse_tensor::nn::Conv2d;
use sse_tensor::ops::avgpool2_data;
use sse_tensor::{Binder, ParamStore, Scalar, Tensor, Var};

use crate::error::{invalid, Result};
use crate::generator::scaled_channels;

/// Layers per discriminator, coarse to fine.
pub const DISC_LAYERS: [usize; 3] = [4, 5, 6];
pub const DISC_KERNEL: usize = 5;
pub const DISC_MAX_CHANNELS: usize = 512;
/// Channels of the patch map.
pub const DISC_OUT_CHANNELS: usize = 3;

/// Patch discriminator over an image concatenated with its one-hot layout:
/// 5×5 stride-2 convs with leaky ReLU, 64 channels doubling up to 512, and a
/// last layer down to 3 channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorNet {
    pub layers: Vec<Conv2d>,
}

impl DiscriminatorNet {
    pub fn new(prefix: &str, num_layers: usize, num_classes: usize, width: f64) -> Self {
        let mut layers = Vec::with_capacity(num_layers);
        let mut prev = 3 + num_classes;
        for i in 0..num_layers {
            let out = if i + 1 == num_layers { DISC_OUT_CHANNELS } else { scaled_channels((64 << i).min(DISC_MAX_CHANNELS), width) };
            layers.push(Conv2d::new(format!("{prefix}.conv{i}"), prev, out, DISC_KERNEL, 2));
            prev = out;
        }
        Self { layers }
    }

    pub fn init<T: Scalar>(&self, seed: u64, store: &mut ParamStore<T>) -> Result<()> {
        for l in &self.layers {
            store.add_layer(l.init(seed)?)?;
        }
        Ok(())
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, image: Var<'g, T>, onehot: Var<'g, T>) -> Result<Var<'g, T>> {
        let mut h = Var::concat(&[image, onehot], 1)?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(p, h)?;
            if i < last {
                h = h.leaky_relu(0.2)?;
            }
        }
        Ok(h)
    }
}

/// One discriminator per active generator stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminators {
    pub stages: Vec<usize>,
    pub nets: Vec<DiscriminatorNet>,
}

impl Discriminators {
    pub fn new(stages: impl IntoIterator<Item = usize>, num_classes: usize, width: f64) -> Self {
        let stages: Vec<usize> = stages.into_iter().collect();
        let nets = stages.iter().map(|&k| DiscriminatorNet::new(&format!("disc{}", k + 1), DISC_LAYERS[k], num_classes, width)).collect();
        Self { stages, nets }
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for n in &self.nets {
            n.init(seed, &mut store)?;
        }
        Ok(store)
    }
}

/// Area-downsample `N × C × H × W` data `levels` times.
pub fn area_down<T: Scalar>(t: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    let (n, c, mut h, mut w) = t.dims4()?;
    let mut data = t.data().to_vec();
    for _ in 0..levels {
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid("area downsample", format!("{h}×{w} cannot be halved")));
        }
        data = avgpool2_data(&data, n * c, h, w);
        (h, w) = (h / 2, w / 2);
    }
    Ok(Tensor::new(vec![n, c, h, w], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sse_tensor::Graph;

    #[test]
    fn layer_counts_and_patch_output() {
        let d = Discriminators::new(0..3, 7, 0.25);
        let counts: Vec<usize> = d.nets.iter().map(|n| n.layers.len()).collect();
        assert_eq!(counts, vec![4, 5, 6]);
        let net = &d.nets[2];
        assert_eq!(net.layers[0].out_channels, 16);
        assert_eq!(net.layers[4].out_channels, 128);
        assert_eq!(net.layers[5].out_channels, 3);
        assert!(net.layers.iter().all(|l| l.kernel == 5 && l.stride == 2));

        let params = d.init::<f32>(1).unwrap();
        let g = Graph::new();
        let p = Binder::new(&g, &params, false);
        let img = g.constant(Tensor::zeros(vec![2, 3, 16, 16]));
        let oh = g.constant(Tensor::zeros(vec![2, 7, 16, 16]));
        assert_eq!(d.nets[0].forward(&p, img, oh).unwrap().shape(), vec![2, 3, 1, 1]);
    }
}

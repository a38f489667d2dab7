//! Parameterised layers. Each layer owns the names of its parameters and
//! reads them from a [`Binder`] at forward time.

use crate::error::Result;
use crate::params::{Binder, LayerParams};
use crate::{Scalar, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// Square kernel with "same" padding.
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self { name: name.into(), in_channels, out_channels, kernel, stride, padding: kernel / 2 }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<LayerParams<T>> {
        let mut lp = LayerParams::new(seed);
        let fan_in = self.in_channels * self.kernel * self.kernel;
        lp.kaiming_uniform(self.weight_name(), vec![self.out_channels, self.in_channels, self.kernel, self.kernel], fan_in)?;
        lp.insert(self.bias_name(), Tensor::zeros(vec![self.out_channels]))?;
        Ok(lp)
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.conv2d(p.get(&self.weight_name())?, Some(p.get(&self.bias_name())?), self.stride, self.padding)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_features: usize, out_features: usize) -> Self {
        Self { name: name.into(), in_features, out_features }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<LayerParams<T>> {
        let mut lp = LayerParams::new(seed);
        lp.kaiming_uniform(self.weight_name(), vec![self.out_features, self.in_features], self.in_features)?;
        lp.insert(self.bias_name(), Tensor::zeros(vec![self.out_features]))?;
        Ok(lp)
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        x.linear(p.get(&self.weight_name())?, Some(p.get(&self.bias_name())?))
    }
}

/// Parameters subject to decoupled weight decay: conv and linear kernels.
pub fn is_decayed(name: &str) -> bool {
    name.ends_with(".weight")
}

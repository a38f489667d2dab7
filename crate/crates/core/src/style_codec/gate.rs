use sse_tensor::nn::Linear;
use sse_tensor::{Binder, ParamStore, Scalar, Tensor, Var};

use crate::error::{invalid, Result};

pub const GATE_HIDDEN: usize = 32;

/// Maps a region's valid ratio to a per-dimension scale and shift for its
/// style code: `1 → 32 → 2D`, ReLU inside, sigmoid on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidRatioGate {
    pub style_dim: usize,
    l1: Linear,
    l2: Linear,
}

impl ValidRatioGate {
    pub fn new(prefix: &str, style_dim: usize) -> Self {
        Self {
            style_dim,
            l1: Linear::new(format!("{prefix}.l1"), 1, GATE_HIDDEN),
            l2: Linear::new(format!("{prefix}.l2"), GATE_HIDDEN, 2 * style_dim),
        }
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        store.add_layer(self.l1.init(seed)?)?;
        store.add_layer(self.l2.init(seed)?)?;
        Ok(store)
    }

    pub fn param_names(&self) -> Vec<String> {
        vec![self.l1.weight_name(), self.l1.bias_name(), self.l2.weight_name(), self.l2.bias_name()]
    }

    /// `(scale, shift)`, each `R × D`, for the given ratios.
    pub fn scale_shift<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, ratios: &[f64]) -> Result<(Var<'g, T>, Var<'g, T>)> {
        if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(invalid("valid-ratio gate", format!("ratio {bad} outside (0, 1]; fully erased regions must be resolved first")));
        }
        let r = p.graph().constant(Tensor::new(vec![ratios.len(), 1], ratios.iter().map(|&v| T::of(v)).collect())?);
        let s = self.l2.forward(p, self.l1.forward(p, r)?.relu()?)?.sigmoid()?;
        let d = self.style_dim;
        Ok((s.narrow(1, 0, d)?, s.narrow(1, d, d)?))
    }

    /// `style' = scale ⊙ style + shift`.
    pub fn apply<'g, T: Scalar>(&self, p: &Binder<'g, '_, T>, styles: Var<'g, T>, ratios: &[f64]) -> Result<Var<'g, T>> {
        let shape = styles.shape();
        if shape != [ratios.len(), self.style_dim] {
            return Err(invalid("valid-ratio gate", format!("styles {shape:?} for {} ratios of dim {}", ratios.len(), self.style_dim)));
        }
        let (scale, shift) = self.scale_shift(p, ratios)?;
        Ok(styles.mul(scale)?.add(shift)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sse_tensor::Graph;

    #[test]
    fn zero_params_give_half_scale_and_shift() {
        let gate = ValidRatioGate::new("gate", 3);
        let mut store = gate.init::<f32>(1).unwrap();
        for name in gate.param_names() {
            let t = store.get_mut(&name).unwrap();
            *t = Tensor::zeros(t.shape().to_vec());
        }
        let g = Graph::new();
        let b = Binder::new(&g, &store, false);
        let s = g.constant(Tensor::new(vec![1, 3], vec![2.0, -4.0, 0.0]).unwrap());
        let out = gate.apply(&b, s, &[0.3]).unwrap().value();
        assert_eq!(out.data(), &[1.5, -1.5, 0.5]);
    }

    #[test]
    fn zero_ratio_is_rejected() {
        let gate = ValidRatioGate::new("gate", 2);
        let store = gate.init::<f32>(1).unwrap();
        let g = Graph::new();
        let b = Binder::new(&g, &store, false);
        let s = g.constant(Tensor::zeros(vec![2, 2]));
        assert!(gate.apply(&b, s, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn ratios_change_the_output_and_range_is_open_unit() {
        let gate = ValidRatioGate::new("gate", 8);
        let store = gate.init::<f64>(5).unwrap();
        let g = Graph::new();
        let b = Binder::new(&g, &store, false);
        let (scale, shift) = gate.scale_shift(&b, &[0.2, 1.0, 1e-4]).unwrap();
        for v in scale.value().data().iter().chain(shift.value().data()) {
            assert!(*v > 0.0 && *v < 1.0);
        }
        let s = g.constant(Tensor::full(vec![2, 8], 0.7));
        let out = gate.apply(&b, s, &[0.2, 1.0]).unwrap().value();
        assert_ne!(out.narrow(0, 0, 1).unwrap().data(), out.narrow(0, 1, 1).unwrap().data());
    }
}

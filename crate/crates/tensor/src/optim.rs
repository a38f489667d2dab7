use std::collections::BTreeMap;

use crate::error::{shape_err, Result};
use crate::nn::is_decayed;
use crate::params::ParamStore;
use crate::{Scalar, Tensor};

/// Adam with decoupled weight decay on kernels only.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub state: AdamState<T>,
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, weight_decay, state: AdamState { step: 0, m: BTreeMap::new(), v: BTreeMap::new() } }
    }

    /// Apply one update to every parameter with a gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let (bc1, bc2) = (T::of(bc1), T::of(bc2));
        for (name, grad) in grads {
            let p = params.get_mut(name)?;
            if p.shape() != grad.shape() {
                return Err(shape_err("adam", p.shape(), grad.shape()));
            }
            let m = self.state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let v = self.state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
            let decay = if is_decayed(name) { T::of(self.weight_decay) } else { T::zero() };
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), p.data_mut());
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = b1 * md[i] + one_b1 * g;
                vd[i] = b2 * vd[i] + one_b2 * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] = pd[i] - lr * (m_hat / (v_hat.sqrt() + eps) + decay * pd[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_params_bit_identical() {
        let mut store = ParamStore::<f32>::new();
        store.insert("l.weight".into(), Tensor::from_fn(vec![5], |i| i as f32 * 0.3 - 0.7)).unwrap();
        let before = store.clone();
        let mut opt = Adam::new(0.0, 0.5, 0.999, 1e-4);
        let grads = BTreeMap::from([("l.weight".to_string(), Tensor::full(vec![5], 2.5f32))]);
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::<f64>::new();
        store.insert("b.bias".into(), Tensor::zeros(vec![2])).unwrap();
        let mut opt = Adam::new(0.1, 0.9, 0.999, 0.5);
        let grads = BTreeMap::from([("b.bias".to_string(), Tensor::new(vec![2], vec![3.0, -0.5]).unwrap())]);
        opt.step(&mut store, &grads).unwrap();
        let p = store.get("b.bias").unwrap().data();
        assert!((p[0] + 0.1).abs() < 1e-6 && (p[1] - 0.1).abs() < 1e-6);
    }
}

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::{Graph, Scalar, Tensor, Var};

/// Stable 64-bit FNV-1a, used to derive per-layer seeds from parameter names.
pub fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Deterministic RNG for the layer `name` under a global seed.
pub fn layer_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ name_hash(name))
}

/// Named parameter tensors of one layer, created from `init_seed`.
#[derive(Clone, Debug)]
pub struct LayerParams<T> {
    pub init_seed: u64,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(init_seed: u64) -> Self {
        Self { init_seed, tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: String, tensor: Tensor<T>) -> Result<()> {
        if self.tensors.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    /// Kaiming-uniform weights, bound `sqrt(6 / fan_in)`.
    pub fn kaiming_uniform(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> Result<()> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let mut rng = layer_rng(self.init_seed, &name);
        let t = Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..bound)));
        self.insert(name, t)
    }

    /// Multiply the tensor `name` in place, e.g. to shrink an initial draw.
    pub fn scale(&mut self, name: &str, gain: f64) -> Result<()> {
        let t = self.tensors.get_mut(name).ok_or_else(|| TensorError::MissingParam(name.to_string()))?;
        let g = T::of(gain);
        t.data_mut().iter_mut().for_each(|v| *v = *v * g);
        Ok(())
    }
}

/// All parameters of a model, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new() }
    }

    pub fn add_layer(&mut self, layer: LayerParams<T>) -> Result<()> {
        for (name, t) in layer.tensors {
            self.insert(name, t)?;
        }
        Ok(())
    }

    pub fn insert(&mut self, name: String, tensor: Tensor<T>) -> Result<()> {
        if self.params.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params.get(name).ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params.get_mut(name).ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Merge another store; names must not collide.
    pub fn extend(&mut self, other: ParamStore<T>) -> Result<()> {
        for (name, t) in other.params {
            self.insert(name, t)?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }
}

impl<T: Scalar> FromIterator<(String, Tensor<T>)> for ParamStore<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Self { params: iter.into_iter().collect() }
    }
}

/// Exposes stored parameters as graph leaves for one forward pass.
pub struct Binder<'g, 's, T: Scalar> {
    graph: &'g Graph<T>,
    store: &'s ParamStore<T>,
    trainable: bool,
    bound: RefCell<BTreeMap<String, Var<'g, T>>>,
}

impl<'g, 's, T: Scalar> Binder<'g, 's, T> {
    pub fn new(graph: &'g Graph<T>, store: &'s ParamStore<T>, trainable: bool) -> Self {
        Self { graph, store, trainable, bound: RefCell::new(BTreeMap::new()) }
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn get(&self, name: &str) -> Result<Var<'g, T>> {
        if let Some(v) = self.bound.borrow().get(name) {
            return Ok(*v);
        }
        let v = self.graph.leaf(self.store.get(name)?.clone(), self.trainable);
        self.bound.borrow_mut().insert(name.to_string(), v);
        Ok(v)
    }

    /// Use `var` for the parameter `name` in this pass, e.g. to differentiate
    /// with respect to a value supplied from outside. Must precede any `get`.
    pub fn bind(&self, name: &str, var: Var<'g, T>) -> Result<()> {
        let stored = self.store.get(name)?;
        if var.shape() != stored.shape() {
            return Err(crate::error::shape_err("bind", stored.shape(), &var.shape()));
        }
        if self.bound.borrow_mut().insert(name.to_string(), var).is_some() {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        Ok(())
    }

    /// Gradients of every parameter touched by the forward pass.
    pub fn grads(&self) -> BTreeMap<String, Tensor<T>> {
        self.bound
            .borrow()
            .iter()
            .filter_map(|(name, v)| v.grad().map(|g| (name.clone(), g)))
            .collect()
    }

    pub fn used(&self) -> Vec<String> {
        self.bound.borrow().keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_values() {
        let make = |seed| {
            let mut lp = LayerParams::<f32>::new(seed);
            lp.kaiming_uniform("conv.weight".into(), vec![4, 3, 3, 3], 27).unwrap();
            lp.tensors["conv.weight"].clone()
        };
        assert_eq!(make(7), make(7));
        assert_ne!(make(7), make(8));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut lp = LayerParams::<f32>::new(0);
        lp.insert("a".into(), Tensor::zeros(vec![1])).unwrap();
        assert!(lp.insert("a".into(), Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn kaiming_bound_holds() {
        let mut lp = LayerParams::<f64>::new(3);
        lp.kaiming_uniform("w".into(), vec![1000], 10).unwrap();
        let bound = (0.6f64).sqrt();
        assert!(lp.tensors["w"].data().iter().all(|v| v.abs() < bound));
    }
}

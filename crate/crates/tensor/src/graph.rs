//! Gradient tape.
//!
//! Every op appends a node holding its value and, when any input is tracked,
//! a closure mapping the output gradient to input gradients. Nodes are created
//! in topological order, so `backward` is a single reverse sweep.

use std::cell::RefCell;
use std::fmt;

use crate::error::{Result, TensorError};
use crate::{Scalar, Tensor};

/// Maps the output gradient to one gradient per parent. `needs[i]` is false
/// for parents that are not tracked; their slot may be `None`.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Result<Vec<Option<Tensor<T>>>>>;

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    op: &'static str,
}

struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Option<Vec<Option<Tensor<T>>>>,
}

/// Single-threaded computation graph.
pub struct Graph<T: Scalar> {
    tape: RefCell<Tape<T>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Scalar> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { tape: RefCell::new(Tape { nodes: Vec::new(), grads: None }) }
    }

    pub fn len(&self) -> usize {
        self.tape.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut tape = self.tape.borrow_mut();
        tape.nodes.push(node);
        Var { graph: self, id: tape.nodes.len() - 1 }
    }

    /// Untracked input.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(Node { value, requires_grad, parents: Vec::new(), backward: None, op: "leaf" })
    }

    /// Record the result of a custom op. The backward closure is dropped when
    /// no parent is tracked.
    pub fn record<'g>(
        &'g self,
        op: &'static str,
        parents: &[Var<'g, T>],
        value: Tensor<T>,
        backward: impl Fn(&Tensor<T>, &[bool]) -> Result<Vec<Option<Tensor<T>>>> + 'static,
    ) -> Result<Var<'g, T>> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op });
        }
        let requires_grad = {
            let tape = self.tape.borrow();
            parents.iter().any(|p| {
                assert!(std::ptr::eq(p.graph, self), "{op}: operands belong to different graphs");
                tape.nodes[p.id].requires_grad
            })
        };
        let backward: Option<BackwardFn<T>> = if requires_grad { Some(Box::new(backward)) } else { None };
        Ok(self.push(Node { value, requires_grad, parents: parents.iter().map(|p| p.id).collect(), backward, op }))
    }

    /// Populate gradients of every tracked node with respect to `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        let mut tape = self.tape.borrow_mut();
        if tape.grads.is_some() {
            return Err(TensorError::BackwardTwice);
        }
        let shape = tape.nodes[loss.id].value.shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; tape.nodes.len()];
        grads[loss.id] = Some(Tensor::full(shape, T::one()));
        for id in (0..=loss.id).rev() {
            let node = &tape.nodes[id];
            let (Some(grad), Some(backward)) = (grads[id].as_ref(), node.backward.as_ref()) else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|&p| tape.nodes[p].requires_grad).collect();
            let parent_grads = backward(grad, &needs)?;
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op);
            for ((&pid, pg), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                if !pg.all_finite() {
                    return Err(TensorError::NonFinite { op: node.op });
                }
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += *b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        tape.grads = Some(grads);
        Ok(())
    }

    /// Clear gradients so `backward` may run again.
    pub fn reset_grads(&self) {
        self.tape.borrow_mut().grads = None;
    }

    pub fn grad(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        let tape = self.tape.borrow();
        let grads = tape.grads.as_ref()?;
        if !tape.nodes[var.id].requires_grad {
            return None;
        }
        Some(grads[var.id].clone().unwrap_or_else(|| Tensor::zeros(tape.nodes[var.id].value.shape().to_vec())))
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor<T> {
        self.graph.tape.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.tape.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.tape.borrow().nodes[self.id].requires_grad
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.graph.grad(*self)
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.constant(self.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_sum_is_ones() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_fn(vec![2, 2], |i| i as f64), true);
        let loss = x.sum().unwrap();
        g.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn half_sum_of_squares_has_gradient_x() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.5, -2.0, 0.25]).unwrap(), true);
        let loss = x.mul(x).unwrap().sum().unwrap().scale(0.5).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), x.value().data());
    }

    #[test]
    fn reuse_accumulates_additively() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::ones(vec![2]), true);
        let y = x.add(x).unwrap().add(x).unwrap();
        g.backward(y.sum().unwrap()).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn non_scalar_and_repeated_backward_are_errors() {
        let g = Graph::<f32>::new();
        let x = g.leaf(Tensor::ones(vec![2]), true);
        assert!(matches!(g.backward(x), Err(TensorError::NotScalar(_))));
        let s = x.sum().unwrap();
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(TensorError::BackwardTwice)));
        g.reset_grads();
        g.backward(s).unwrap();
    }

    #[test]
    fn constants_get_no_gradient() {
        let g = Graph::<f32>::new();
        let c = g.constant(Tensor::ones(vec![2]));
        let x = g.leaf(Tensor::ones(vec![2]), true);
        g.backward(c.mul(x).unwrap().sum().unwrap()).unwrap();
        assert!(c.grad().is_none());
        assert!(x.grad().is_some());
    }
}

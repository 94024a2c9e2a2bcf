//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every differentiable operation executed through a
//! [`Var`]. Calling [`Tape::backward`] on a scalar replays the record in
//! reverse and leaves gradients on every leaf that requires them. A tape is
//! single use: one forward pass, at most one backward pass.

mod gradcheck;
mod ops;

use std::cell::{Cell, RefCell};
use std::fmt;
use std::sync::Arc;

pub use gradcheck::{grad_check, GradCheckReport};
pub(crate) use ops::{sigmoid, softplus};
#[cfg(test)]
pub(crate) use ops::flip_data;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Vector-Jacobian product of one recorded operation.
///
/// Receives the gradient of the output and a flag per parent saying whether
/// that parent needs a gradient; returns one entry per parent.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Element> {
    value: Arc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
    op: &'static str,
}

pub struct Tape<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Element> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Element> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Element> Copy for Var<'_, T> {}

impl<T: Element> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        write!(f, "Var#{}({}, {:?})", self.id, n.op, n.value.shape())
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record a leaf that participates in differentiation.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(Arc::new(value), true)
    }

    /// Record a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(Arc::new(value), false)
    }

    /// Record a shared leaf without copying its buffer.
    pub fn leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
            grad: None,
            op: "leaf",
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Record the result of an operation. `backward` is dropped when no
    /// parent requires a gradient.
    pub(crate) fn push(
        &self,
        op: &'static str,
        value: impl Into<Arc<Tensor<T>>>,
        parents: &[Var<'_, T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Result<Var<'_, T>> {
        let value = value.into();
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op.to_string() });
        }
        let mut nodes = self.nodes.borrow_mut();
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = ids.iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node {
            value,
            parents: ids,
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            requires_grad,
            grad: None,
            op,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Record an operation with a caller-supplied vector-Jacobian product.
    ///
    /// The output `value` must already be computed from `inputs`. This is the
    /// extension point for fused kernels defined outside the crate.
    pub fn custom<'t>(
        &'t self,
        op: &'static str,
        inputs: &[Var<'t, T>],
        value: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> Result<Var<'t, T>> {
        self.push(op, value, inputs, backward)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<()> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Contract("loss was recorded on a different tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::Contract("backward already ran on this tape".into()));
        }
        let mut nodes = self.nodes.borrow_mut();
        let numel = nodes[loss.id].value.numel();
        if numel != 1 {
            self.consumed.set(false);
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape().to_vec()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &mut nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(bw) = node.backward.take() else {
                // leaf
                match &mut node.grad {
                    Some(acc) => add_in_place(acc, &g),
                    None => node.grad = Some(g),
                }
                continue;
            };
            let parents = node.parents.clone();
            let needs: Vec<bool> = parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let pgrads = bw(&g, &needs);
            debug_assert_eq!(pgrads.len(), parents.len(), "op {}", nodes[id].op);
            for (&p, pg) in parents.iter().zip(pgrads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "grad shape from {}", nodes[id].op);
                match &mut grads[p] {
                    Some(acc) => add_in_place(acc, &pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    fn value_of(&self, id: usize) -> Arc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }
}

fn add_in_place<T: Element>(acc: &mut Tensor<T>, g: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }

    /// Move the accumulated gradient out of the tape.
    pub fn take_grad(&self) -> Option<Tensor<T>> {
        self.tape.nodes.borrow_mut()[self.id].grad.take()
    }
}

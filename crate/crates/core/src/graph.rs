//! Reverse-mode autodiff on dynamically shaped arrays.
//!
//! A [`Graph`] is an append-only tape: every operation pushes one node holding
//! its forward value plus a closure that maps the node's output gradient to
//! gradients for its parents. Node ids are already in topological order, so
//! backward is a single reverse sweep over the tape.
//!
//! Tensors are thin handles (`Rc` graph + node id); cloning is cheap and the
//! graph owns all values until it is dropped. One graph corresponds to one
//! forward pass; training builds a fresh graph per step.

use ndarray::{ArrayD, IxDyn, LinalgScalar, ScalarOperand};
use num_traits::Float;
use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;

/// Scalar element type the engine works over. Implemented for `f32`/`f64`;
/// `f64` instantiations back the finite-difference oracles in tests.
pub trait Element:
    LinalgScalar + Float + ScalarOperand + fmt::Debug + fmt::Display + Send + Sync
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Element for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Element for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// View of a node's inputs handed to backward closures.
pub(crate) struct BackArgs<'a, F: Element> {
    pub parents: Vec<&'a ArrayD<F>>,
    pub out: &'a ArrayD<F>,
}

/// Maps d(loss)/d(out) to per-parent gradients. `None` entries are parents
/// that do not require grad; the engine skips accumulating them.
pub(crate) type BackwardFn<F> =
    Box<dyn Fn(&ArrayD<F>, &BackArgs<'_, F>) -> Vec<Option<ArrayD<F>>>>;

struct BackOp<F: Element> {
    parents: Vec<usize>,
    run: BackwardFn<F>,
}

struct Inner<F: Element> {
    values: Vec<ArrayD<F>>,
    needs_grad: Vec<bool>,
    back: Vec<Option<BackOp<F>>>,
}

/// Computation tape. Clones share the same underlying arena.
pub struct Graph<F: Element> {
    inner: Rc<RefCell<Inner<F>>>,
}

impl<F: Element> Clone for Graph<F> {
    fn clone(&self) -> Self {
        Graph {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<F: Element> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Element> Graph<F> {
    pub fn new() -> Self {
        Graph {
            inner: Rc::new(RefCell::new(Inner {
                values: Vec::new(),
                needs_grad: Vec::new(),
                back: Vec::new(),
            })),
        }
    }

    /// Whether two handles point at the same tape.
    pub fn ptr_eq(&self, other: &Graph<F>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Number of nodes on the tape.
    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf with no gradient tracking.
    pub fn constant(&self, value: ArrayD<F>) -> Tensor<F> {
        self.push_leaf(value, false)
    }

    /// Leaf that participates in backward (a parameter or probed input).
    pub fn leaf(&self, value: ArrayD<F>, needs_grad: bool) -> Tensor<F> {
        self.push_leaf(value, needs_grad)
    }

    pub fn scalar(&self, v: F) -> Tensor<F> {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    fn push_leaf(&self, value: ArrayD<F>, needs_grad: bool) -> Tensor<F> {
        let shape = value.shape().to_vec();
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.values.push(value);
            inner.needs_grad.push(needs_grad);
            inner.back.push(None);
            inner.values.len() - 1
        };
        Tensor {
            graph: self.clone(),
            id,
            shape,
        }
    }

    pub(crate) fn push_op(
        &self,
        value: ArrayD<F>,
        parents: Vec<usize>,
        run: BackwardFn<F>,
    ) -> Tensor<F> {
        let shape = value.shape().to_vec();
        let id = {
            let mut inner = self.inner.borrow_mut();
            let needs = parents.iter().any(|&p| inner.needs_grad[p]);
            inner.values.push(value);
            inner.needs_grad.push(needs);
            inner
                .back
                .push(if needs { Some(BackOp { parents, run }) } else { None });
            inner.values.len() - 1
        };
        Tensor {
            graph: self.clone(),
            id,
            shape,
        }
    }

    pub(crate) fn value_ref(&self, id: usize) -> Ref<'_, ArrayD<F>> {
        Ref::map(self.inner.borrow(), |inner| &inner.values[id])
    }

    pub(crate) fn needs_grad(&self, id: usize) -> bool {
        self.inner.borrow().needs_grad[id]
    }

    /// Reverse sweep from `loss` (must be scalar-shaped). Returns gradients
    /// for every grad-requiring leaf; intermediate gradients are dropped as
    /// soon as their consumers have run.
    pub fn backward(&self, loss: &Tensor<F>) -> Gradients<F> {
        assert!(
            loss.shape.iter().product::<usize>() == 1,
            "backward expects a scalar loss, got shape {:?}",
            loss.shape
        );
        let inner = self.inner.borrow();
        let n = inner.values.len();
        let mut grads: Vec<Option<ArrayD<F>>> = (0..n).map(|_| None).collect();
        grads[loss.id] = Some(ArrayD::from_elem(inner.values[loss.id].raw_dim(), F::one()));

        for id in (0..=loss.id).rev() {
            if grads[id].is_none() {
                continue;
            }
            let Some(op) = inner.back[id].as_ref() else {
                continue; // leaf: keep its gradient
            };
            let g = grads[id].take().expect("checked above");
            let args = BackArgs {
                parents: op.parents.iter().map(|&p| &inner.values[p]).collect(),
                out: &inner.values[id],
            };
            let parent_grads = (op.run)(&g, &args);
            debug_assert_eq!(parent_grads.len(), op.parents.len());
            for (&pid, pg) in op.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !inner.needs_grad[pid] {
                    continue;
                }
                debug_assert_eq!(
                    pg.shape(),
                    inner.values[pid].shape(),
                    "gradient shape mismatch for node {pid}"
                );
                match &mut grads[pid] {
                    Some(acc) => acc.zip_mut_with(&pg, |a, &b| *a = *a + b),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { by_node: grads }
    }
}

/// Handle to one node of a [`Graph`].
pub struct Tensor<F: Element> {
    pub(crate) graph: Graph<F>,
    pub(crate) id: usize,
    pub(crate) shape: Vec<usize>,
}

impl<F: Element> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor {
            graph: self.graph.clone(),
            id: self.id,
            shape: self.shape.clone(),
        }
    }
}

impl<F: Element> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor(id={}, shape={:?})", self.id, self.shape)
    }
}

impl<F: Element> Tensor<F> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn graph(&self) -> &Graph<F> {
        &self.graph
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.needs_grad(self.id)
    }

    /// Borrow the forward value.
    pub fn value(&self) -> Ref<'_, ArrayD<F>> {
        self.graph.value_ref(self.id)
    }

    /// Owned copy of the forward value.
    pub fn to_array(&self) -> ArrayD<F> {
        self.value().to_owned()
    }

    /// The forward value of a scalar-shaped tensor.
    pub fn item(&self) -> F {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on non-scalar tensor");
        *v.iter().next().expect("len checked")
    }
}

/// Result of a backward sweep.
pub struct Gradients<F: Element> {
    by_node: Vec<Option<ArrayD<F>>>,
}

impl<F: Element> Gradients<F> {
    /// Gradient for a leaf tensor, if it required grad and was reached.
    pub fn get(&self, t: &Tensor<F>) -> Option<&ArrayD<F>> {
        self.by_node.get(t.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, t: &Tensor<F>) -> Option<ArrayD<F>> {
        self.by_node.get_mut(t.id).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn backward_reaches_leaves_and_accumulates() {
        let g = Graph::<f64>::new();
        let x = g.leaf(ArrayD::from_elem(IxDyn(&[3]), 2.0), true);
        // loss = sum(x * x) -> dx = 2x = 4
        let y = ops::mul(&x, &x);
        let loss = ops::sum_all(&y);
        let grads = g.backward(&loss);
        let dx = grads.get(&x).unwrap();
        assert!(dx.iter().all(|&v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn constants_do_not_track() {
        let g = Graph::<f32>::new();
        let x = g.constant(ArrayD::from_elem(IxDyn(&[2]), 1.0));
        let y = ops::mul(&x, &x);
        assert!(!y.requires_grad());
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar() {
        let g = Graph::<f32>::new();
        let x = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 1.0), true);
        let y = ops::mul(&x, &x);
        let _ = g.backward(&y);
    }
}

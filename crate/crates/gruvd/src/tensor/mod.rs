//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable value node in a computation graph. Operations
//! build the graph as they run; calling [`Tensor::backward`] on a scalar loss
//! replays the recorded operations in reverse execution order and accumulates
//! gradients into the parameter leaves that requested them.
//!
//! Design points that the rest of the crate relies on:
//!
//! * **Creation order is evaluation order.** Every tensor gets a globally
//!   increasing id. Since an operation's inputs always exist before its
//!   output, ids sorted descending are a valid reverse topological order,
//!   and the backward pass is a single linear sweep.
//! * **Gradients persist only on parameters.** Interior nodes exchange
//!   gradient flow through a transient map that lives for one backward call.
//!   Repeated backward calls therefore *accumulate* into parameter
//!   gradients; call [`Tensor::zero_grad`] (or the trainer does) between
//!   steps.
//! * **Graphs are pruned eagerly.** An operation whose inputs all have
//!   `requires_grad == false` produces a plain leaf, so inference builds no
//!   graph at all and [`Tensor::detach`] truly severs history.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

mod conv;
mod gradcheck;
mod ops;
mod serial;

pub use gradcheck::finite_difference_check;
pub use ops::convex_fuse;
pub use serial::{
    read_named_tensors, read_tensor, read_tensor_from, write_named_tensors, write_tensor,
    write_tensor_to,
};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Gradient contributions flowing to each parent, aligned with the parent
/// list; `None` marks a parent that receives no gradient from this op.
pub(crate) type ParentGrads<S> = Vec<Option<Vec<S>>>;

/// Backward rule of a recorded operation: given the output node and the
/// gradient flowing into it, produce the gradient for each parent.
pub(crate) type BackwardFn<S> = Box<dyn Fn(&Tensor<S>, &[S]) -> ParentGrads<S> + Send + Sync>;

pub(crate) struct OpNode<S: Scalar> {
    pub(crate) name: &'static str,
    pub(crate) parents: Vec<Tensor<S>>,
    pub(crate) backward: BackwardFn<S>,
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<S>>>,
    op: Option<OpNode<S>>,
}

/// A reference-counted, immutable n-dimensional array of scalars.
///
/// Cloning is cheap (an `Arc` bump) and clones share identity: gradients
/// accumulated through one clone are visible through all.
pub struct Tensor<S: Scalar = f32> {
    inner: Arc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field(
                "op",
                &self.inner.op.as_ref().map(|o| o.name).unwrap_or("leaf"),
            )
            .finish()
    }
}

pub(crate) fn shape_string(shape: &[usize]) -> String {
    format!("{shape:?}")
}

impl<S: Scalar> Tensor<S> {
    fn new_leaf(data: Vec<S>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                op: None,
            }),
        }
    }

    /// Builds an operation result. The node is a plain leaf (no recorded op)
    /// when no parent tracks gradients, so inference allocates no graph.
    pub(crate) fn from_op(
        data: Vec<S>,
        shape: Vec<usize>,
        name: &'static str,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Self {
        let tracked = parents.iter().any(|p| p.inner.requires_grad);
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                requires_grad: tracked,
                grad: Mutex::new(None),
                op: tracked.then(|| OpNode {
                    name,
                    parents,
                    backward,
                }),
            }),
        }
    }

    /// Leaf tensor from raw data; fails if the element count does not match
    /// the shape.
    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::shape(
                "from_vec",
                format!("{numel} elements for shape {}", shape_string(shape)),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self::new_leaf(data, shape.to_vec(), false))
    }

    /// Trainable leaf (`requires_grad == true`).
    pub fn param(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        Ok(Self::from_vec(data, shape)?.require_grad())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::ZERO)
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let numel = shape.iter().product();
        Self::new_leaf(vec![value; numel], shape.to_vec(), false)
    }

    /// Rank-0 tensor holding one value.
    pub fn scalar(value: S) -> Self {
        Self::new_leaf(vec![value], Vec::new(), false)
    }

    /// Leaf filled with `std`-scaled normal draws from `rng`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut SplitMix64) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| S::from_f64(rng.next_normal() * std))
            .collect();
        Self::new_leaf(data, shape.to_vec(), false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[S] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn value(&self) -> S {
        assert_eq!(
            self.numel(),
            1,
            "value() requires a one-element tensor, shape is {:?}",
            self.shape()
        );
        self.inner.data[0]
    }

    /// Copy of the accumulated gradient, if any has been accumulated.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.lock().unwrap().clone()
    }

    /// Clears the accumulated gradient.
    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    /// Same data as a fresh non-tracking leaf: gradient flow stops here.
    /// Used at truncation boundaries of backpropagation through time.
    pub fn detach(&self) -> Tensor<S> {
        Self::new_leaf(self.inner.data.clone(), self.inner.shape.clone(), false)
    }

    /// Same data as a fresh trainable leaf.
    pub fn require_grad(&self) -> Tensor<S> {
        Self::new_leaf(self.inner.data.clone(), self.inner.shape.clone(), true)
    }

    /// Leaf with identical data converted element-wise to another precision.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let data = self.inner.data.iter().map(|v| T::from_f64(v.to_f64())).collect();
        Tensor::<T>::new_leaf(data, self.inner.shape.clone(), false)
    }

    /// Replaces the data of a *leaf* tensor in place (optimizer updates).
    /// The tensor keeps its identity, so graphs built afterwards see the new
    /// values. Panics if called on an op result, which would corrupt replay.
    pub(crate) fn set_data(&mut self, data: Vec<S>) {
        assert_eq!(data.len(), self.numel(), "set_data length mismatch");
        let inner = Arc::get_mut(&mut self.inner);
        match inner {
            Some(inner) => {
                assert!(inner.op.is_none(), "set_data on an operation result");
                inner.data = data;
            }
            None => {
                // Shared leaf (e.g. still referenced by a dropped graph):
                // re-create with same flags. Gradient state is cleared,
                // which is correct right after an optimizer step.
                assert!(self.inner.op.is_none(), "set_data on an operation result");
                *self = Tensor::new_leaf(
                    data,
                    self.inner.shape.clone(),
                    self.inner.requires_grad,
                );
            }
        }
    }

    fn accumulate_grad(&self, g: &[S]) {
        let mut slot = self.inner.grad.lock().unwrap();
        match slot.as_mut() {
            Some(acc) => {
                for (a, &v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Snapshot of the operations reachable from this tensor, in reverse
    /// execution order. Mostly useful for inspection; [`Tensor::backward`]
    /// records and replays in one call.
    pub fn record(&self) -> ComputationRecord<S> {
        let mut nodes = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.inner.id) {
                continue;
            }
            if let Some(op) = &t.inner.op {
                for p in &op.parents {
                    if p.inner.requires_grad && !seen.contains(&p.inner.id) {
                        stack.push(p.clone());
                    }
                }
            }
            nodes.push(t);
        }
        nodes.sort_by(|a, b| b.inner.id.cmp(&a.inner.id));
        ComputationRecord { nodes }
    }

    /// Reverse-mode differentiation from a scalar loss: seeds the loss
    /// gradient with 1 and accumulates into every reachable parameter.
    ///
    /// Calling this twice without [`Tensor::zero_grad`] doubles parameter
    /// gradients, because accumulation is additive by design.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::usage(format!(
                "backward requires a one-element loss tensor, got shape {}",
                shape_string(self.shape())
            )));
        }
        self.record().replay(self)
    }
}

/// The operations reachable from a root tensor, ordered for replay.
pub struct ComputationRecord<S: Scalar> {
    nodes: Vec<Tensor<S>>,
}

impl<S: Scalar> ComputationRecord<S> {
    /// Number of recorded nodes (operation results plus tracked leaves).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes, releasing the graph.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Replays the record backwards from `root`, visiting each operation
    /// exactly once in reverse execution order. Gradient flow between
    /// interior nodes lives only for the duration of this call; parameters
    /// receive persistent, additive accumulation.
    pub fn replay(&self, root: &Tensor<S>) -> Result<()> {
        if root.numel() != 1 {
            return Err(Error::usage(format!(
                "replay requires a one-element root tensor, got shape {}",
                shape_string(root.shape())
            )));
        }
        let mut flow: HashMap<u64, Vec<S>> = HashMap::new();
        flow.insert(root.inner.id, vec![S::ONE]);

        for node in &self.nodes {
            let Some(grad) = flow.remove(&node.inner.id) else {
                continue;
            };
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite gradient at node {} during replay",
                    node.inner.op.as_ref().map(|o| o.name).unwrap_or("leaf"),
                )));
            }
            match &node.inner.op {
                None => {
                    if node.inner.requires_grad {
                        node.accumulate_grad(&grad);
                    }
                }
                Some(op) => {
                    let contributions = (op.backward)(node, &grad);
                    debug_assert_eq!(contributions.len(), op.parents.len());
                    for (parent, contrib) in op.parents.iter().zip(contributions) {
                        let Some(contrib) = contrib else { continue };
                        if !parent.inner.requires_grad {
                            continue;
                        }
                        debug_assert_eq!(contrib.len(), parent.numel());
                        match flow.entry(parent.inner.id) {
                            std::collections::hash_map::Entry::Occupied(mut e) => {
                                for (a, v) in e.get_mut().iter_mut().zip(contrib) {
                                    *a += v;
                                }
                            }
                            std::collections::hash_map::Entry::Vacant(e) => {
                                e.insert(contrib);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

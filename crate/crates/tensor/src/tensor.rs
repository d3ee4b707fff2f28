use std::cell::{Cell, RefCell};
use std::rc::{Rc, Weak};

use crate::error::{Result, TensorError};
use crate::shape::numel;
use crate::tape;
use crate::{Dtype, Element};

pub(crate) struct Inner<E: Element> {
    shape: Vec<usize>,
    /// Copy-on-write buffer: backward closures snapshot the `Rc`, so in-place
    /// parameter updates after the tape is dropped stay allocation-free.
    data: RefCell<Rc<Vec<E>>>,
    grad: RefCell<Option<Vec<E>>>,
    requires_grad: Cell<bool>,
    /// (tape uid, node id) on the tape that last recorded this tensor.
    node: Cell<Option<(u64, usize)>>,
}

/// Dense row-major n-dimensional array of floats with an optional gradient
/// slot and tape linkage. Cloning is cheap (shared buffer).
pub struct Tensor<E: Element> {
    inner: Rc<Inner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: self.inner.clone(),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let data = self.data();
        let preview: Vec<&E> = data.iter().take(8).collect();
        write!(
            f,
            "Tensor{{shape: {:?}, dtype: {}, data: {:?}{}}}",
            self.shape(),
            E::DTYPE,
            preview,
            if data.len() > 8 { ", ..." } else { "" }
        )
    }
}

impl<E: Element> Tensor<E> {
    pub(crate) fn from_parts(data: Vec<E>, shape: Vec<usize>) -> Self {
        assert_eq!(
            numel(&shape),
            data.len(),
            "product(shape) must equal len(data)"
        );
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(Rc::new(data)),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
                node: Cell::new(None),
            }),
        }
    }

    pub(crate) fn from_inner(inner: Rc<Inner<E>>) -> Self {
        Tensor { inner }
    }

    pub(crate) fn downgrade(&self) -> Weak<Inner<E>> {
        Rc::downgrade(&self.inner)
    }

    pub(crate) fn node_ref(&self) -> Option<(u64, usize)> {
        self.inner.node.get()
    }

    pub(crate) fn set_node_ref(&self, node: Option<(u64, usize)>) {
        self.inner.node.set(node);
    }

    // ------------------------------------------------------------------
    // construction

    pub fn from_vec(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Invalid {
                op: "from_vec",
                msg: format!("shape {:?} needs {} values, got {}", shape, numel(shape), data.len()),
            });
        }
        Ok(Self::from_parts(data, shape.to_vec()))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(vec![E::zero(); numel(shape)], shape.to_vec())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::from_parts(vec![E::one(); numel(shape)], shape.to_vec())
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        Self::from_parts(vec![value; numel(shape)], shape.to_vec())
    }

    /// Rank-0 scalar.
    pub fn scalar(value: E) -> Self {
        Self::from_parts(vec![value], Vec::new())
    }

    /// Leaf parameter: requires a gradient.
    pub fn param(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    // ------------------------------------------------------------------
    // metadata

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn dtype(&self) -> Dtype {
        E::DTYPE
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.inner.requires_grad.set(flag);
    }

    // ------------------------------------------------------------------
    // data access

    /// Snapshot handle to the value buffer (no copy).
    pub fn data(&self) -> Rc<Vec<E>> {
        self.inner.data.borrow().clone()
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.inner.data.borrow().as_ref().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(self.numel(), 1, "item() requires a one-element tensor");
        self.inner.data.borrow()[0]
    }

    pub fn at(&self, flat_index: usize) -> E {
        self.inner.data.borrow()[flat_index]
    }

    /// Replaces the value buffer in place. Detaches the tensor from any tape
    /// it was recorded on (the recorded value no longer exists).
    pub fn set_data(&self, data: Vec<E>) {
        assert_eq!(data.len(), self.numel(), "set_data length mismatch");
        *self.inner.data.borrow_mut() = Rc::new(data);
        self.inner.node.set(None);
    }

    /// Mutates the value buffer in place via `f`. Copy-on-write: only copies
    /// if a backward closure still holds the old buffer.
    pub fn update_data(&self, f: impl FnOnce(&mut [E])) {
        let mut slot = self.inner.data.borrow_mut();
        let buf: &mut Vec<E> = Rc::make_mut(&mut slot);
        f(buf.as_mut_slice());
        self.inner.node.set(None);
    }

    // ------------------------------------------------------------------
    // gradients

    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, grad: &[E]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => {
                for (e, g) in existing.iter_mut().zip(grad) {
                    *e = *e + *g;
                }
            }
            None => *slot = Some(grad.to_vec()),
        }
    }

    /// Runs the reverse pass from this scalar loss, populating gradients of
    /// every reachable tensor with `requires_grad`. Consumes the active tape:
    /// a second call without a fresh forward pass is a stale-tape error.
    pub fn backward(&self) -> Result<()> {
        tape::run_backward(self)
    }

    /// A copy of this tensor detached from the tape (no gradient linkage).
    pub fn detach(&self) -> Tensor<E> {
        Self::from_parts(self.to_vec(), self.shape().to_vec())
    }

    /// Converts every element; used to move between f32 and f64 worlds.
    pub fn cast<T: Element>(&self) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|v| <T as Element>::from_f64(Element::to_f64(*v)))
            .collect();
        Tensor::<T>::from_parts(data, self.shape().to_vec())
    }
}

use std::cell::{Cell, RefCell};
use std::rc::{Rc, Weak};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::tensor::{Inner, Tensor};
use crate::Element;

pub(crate) type NodeId = usize;

/// Maps the gradient of a node's output to gradient contributions for each
/// parent, in parent order. `None` entries contribute nothing.
pub(crate) type BackFn<E> = Box<dyn Fn(&[E]) -> Vec<Option<Vec<E>>>>;

pub(crate) struct Node<E: Element> {
    pub(crate) parents: Vec<NodeId>,
    pub(crate) backward: Option<BackFn<E>>,
    pub(crate) out: Weak<Inner<E>>,
    pub(crate) out_len: usize,
}

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

pub(crate) struct TapeCore<E: Element> {
    pub(crate) uid: u64,
    pub(crate) nodes: RefCell<Vec<Node<E>>>,
    pub(crate) consumed: Cell<bool>,
    pub(crate) check_finite: Cell<bool>,
}

/// Operation recorder for one forward/backward cycle.
///
/// Install with [`Tape::activate`]; every op executed while the guard lives is
/// recorded. The tape is single-owner: run exactly one backward against it,
/// then build a fresh tape for the next forward pass.
pub struct Tape<E: Element> {
    core: Rc<TapeCore<E>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Tape {
            core: Rc::new(TapeCore {
                uid: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
                nodes: RefCell::new(Vec::new()),
                consumed: Cell::new(false),
                check_finite: Cell::new(false),
            }),
        }
    }

    /// In check-finite mode every recorded op validates its output buffer;
    /// NaN/Inf become a hard error. Used by the verification suites.
    pub fn with_check_finite(check: bool) -> Self {
        let t = Self::new();
        t.core.check_finite.set(check);
        t
    }

    /// Makes this tape the recording target for the current thread until the
    /// returned guard is dropped.
    pub fn activate(&self) -> TapeGuard<E> {
        let prev = E::tape_slot().with(|slot| slot.replace(Some(self.core.clone())));
        TapeGuard { prev }
    }

    pub fn num_nodes(&self) -> usize {
        self.core.nodes.borrow().len()
    }
}

/// Restores the previously active tape on drop.
pub struct TapeGuard<E: Element> {
    prev: Option<Rc<TapeCore<E>>>,
}

impl<E: Element> Drop for TapeGuard<E> {
    fn drop(&mut self) {
        E::tape_slot().with(|slot| {
            *slot.borrow_mut() = self.prev.take();
        });
    }
}

pub(crate) fn active_tape<E: Element>() -> Option<Rc<TapeCore<E>>> {
    E::tape_slot().with(|slot| slot.borrow().clone())
}

/// Registers `t` as a leaf on `tape` if it is not already part of it.
fn ensure_on_tape<E: Element>(tape: &Rc<TapeCore<E>>, t: &Tensor<E>) -> NodeId {
    if let Some((uid, id)) = t.node_ref() {
        if uid == tape.uid {
            return id;
        }
    }
    let mut nodes = tape.nodes.borrow_mut();
    let id = nodes.len();
    nodes.push(Node {
        parents: Vec::new(),
        backward: None,
        out: t.downgrade(),
        out_len: t.numel(),
    });
    t.set_node_ref(Some((tape.uid, id)));
    id
}

/// Records an operation on the active tape (if any) and returns the output
/// tensor. `backward` maps the output gradient to per-input contributions in
/// input order; it must capture whatever forward state it needs.
///
/// This is also the extension point for fused ops with hand-written VJPs.
pub fn record_op<E: Element>(
    op: &'static str,
    inputs: &[&Tensor<E>],
    out_data: Vec<E>,
    out_shape: Vec<usize>,
    backward: impl Fn(&[E]) -> Vec<Option<Vec<E>>> + 'static,
) -> Result<Tensor<E>> {
    debug_assert_eq!(crate::shape::numel(&out_shape), out_data.len());
    let tape = active_tape::<E>();
    if let Some(tape) = &tape {
        if tape.check_finite.get() && !out_data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
    }
    let out = Tensor::from_parts(out_data, out_shape);
    if let Some(tape) = tape {
        let parents: Vec<NodeId> = inputs.iter().map(|t| ensure_on_tape(&tape, t)).collect();
        let mut nodes = tape.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            parents,
            backward: Some(Box::new(backward)),
            out: out.downgrade(),
            out_len: out.numel(),
        });
        out.set_node_ref(Some((tape.uid, id)));
    }
    Ok(out)
}

/// Reverse pass from a scalar loss. Visits each recorded node exactly once in
/// reverse order and accumulates gradients into every tensor that requires
/// them. Leaves unreachable from the loss receive nothing (their gradient is
/// implicitly zero).
pub(crate) fn run_backward<E: Element>(loss: &Tensor<E>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }
    let Some((uid, loss_id)) = loss.node_ref() else {
        return Err(TensorError::Invalid {
            op: "backward",
            msg: "loss is not attached to a tape (was a tape active during the forward pass?)"
                .into(),
        });
    };
    let tape = active_tape::<E>()
        .filter(|t| t.uid == uid)
        .ok_or(TensorError::Invalid {
            op: "backward",
            msg: "the tape that recorded this loss is not active".into(),
        })?;
    if tape.consumed.replace(true) {
        return Err(TensorError::StaleTape);
    }

    let nodes = tape.nodes.borrow();
    let mut grads: Vec<Option<Vec<E>>> = (0..nodes.len()).map(|_| None).collect();
    grads[loss_id] = Some(vec![E::one()]);

    for id in (0..=loss_id).rev() {
        let Some(grad) = grads[id].take() else {
            continue;
        };
        let node = &nodes[id];
        if let Some(inner) = node.out.upgrade() {
            let t = Tensor::from_inner(inner);
            if t.requires_grad() {
                t.accumulate_grad(&grad);
            }
        }
        if let Some(back) = &node.backward {
            let contribs = back(&grad);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (&pid, contrib) in node.parents.iter().zip(contribs) {
                let Some(contrib) = contrib else { continue };
                debug_assert_eq!(contrib.len(), nodes[pid].out_len);
                match &mut grads[pid] {
                    Some(existing) => {
                        for (e, c) in existing.iter_mut().zip(&contrib) {
                            *e = *e + *c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
    }
    Ok(())
}

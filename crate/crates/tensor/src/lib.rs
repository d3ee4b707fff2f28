//! Minimal dense-tensor numerical core with reverse-mode automatic
//! differentiation.
//!
//! Values are contiguous row-major buffers. A [`Tape`] records operations
//! define-by-run while it is active on the current thread; [`Tensor::backward`]
//! replays the records in reverse topological order and deposits gradients
//! into every tensor that requires them. The tape is rebuilt on every forward
//! pass.
//!
//! All numerics are generic over [`Element`]: `f32` for training speed, `f64`
//! for verification suites (finite-difference checks are unreliable at f32).

mod checkpoint;
mod error;
mod gradcheck;
pub mod init;
mod ops;
mod optim;
pub mod shape;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry};
pub use error::{Result, TensorError};
pub use gradcheck::{
    check_param_grads, finite_diff_check, finite_diff_check_sampled, GradCheckReport,
};
pub use ops::{concat, log_sigmoid_scalar, sigmoid_scalar, softplus_scalar};
pub use optim::Adam;
pub use tape::{record_op, Tape, TapeGuard};
pub use tensor::Tensor;

use std::cell::RefCell;
use std::rc::Rc;
use std::thread::LocalKey;

/// Scalar storage width. Checkpoints tag every record with one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Dtype> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

type TapeSlot<E> = RefCell<Option<Rc<tape::TapeCore<E>>>>;

/// Scalar element of a tensor. Implemented for `f32` and `f64`.
pub trait Element:
    num_traits::Float
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[doc(hidden)]
    fn tape_slot() -> &'static LocalKey<TapeSlot<Self>>;
}

thread_local! {
    static TAPE_F32: TapeSlot<f32> = const { RefCell::new(None) };
    static TAPE_F64: TapeSlot<f64> = const { RefCell::new(None) };
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn tape_slot() -> &'static LocalKey<TapeSlot<f32>> {
        &TAPE_F32
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn tape_slot() -> &'static LocalKey<TapeSlot<f64>> {
        &TAPE_F64
    }
}

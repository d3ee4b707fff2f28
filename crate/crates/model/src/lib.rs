//! The SAMamba network and everything it is made of: selective state-space
//! sequence modeling, reusable conv/attention blocks, the FS-Adapter / CSI /
//! DPCF modules, the composite segmentation loss and the evaluation metrics.

pub mod adapter;
pub mod blocks;
pub mod config;
pub mod csi;
pub mod dpcf;
pub mod encoder;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod selective;
pub mod ssm;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] samamba_tensor::TensorError),

    #[error("{op} is only defined for {expected} mode")]
    Mode { op: &'static str, expected: &'static str },

    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

impl From<ModelError> for samamba_tensor::TensorError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => t,
            other => samamba_tensor::TensorError::Wrapped(other.to_string()),
        }
    }
}

/// Named parameter list; the order is the checkpoint order.
pub type ParamList<E> = Vec<(String, samamba_tensor::Tensor<E>)>;

pub(crate) fn push_param<E: samamba_tensor::Element>(
    out: &mut ParamList<E>,
    prefix: &str,
    name: &str,
    t: &samamba_tensor::Tensor<E>,
) {
    out.push((format!("{}.{}", prefix, name), t.clone()));
}

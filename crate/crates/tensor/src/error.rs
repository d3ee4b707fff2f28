use thiserror::Error;

/// Errors produced by tensor construction, shape logic and the tape.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("{op} produced a non-finite value (check-finite mode)")]
    NonFinite { op: &'static str },

    #[error("tape already consumed by backward; run a new forward pass")]
    StaleTape,

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint parse error at byte {offset}: {msg}")]
    Checkpoint { offset: u64, msg: String },

    #[error("gradient check failed for {what}: max rel err {max_err:.3e} > tol {tol:.3e}")]
    GradCheck {
        what: String,
        max_err: f64,
        tol: f64,
    },

    #[error("function is not deterministic: repeated evaluation of {what} differs")]
    NonDeterministic { what: String },

    /// Error from a higher layer passing through tensor-level plumbing
    /// (gradient checks take closures that may fail for non-tensor reasons).
    #[error("{0}")]
    Wrapped(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

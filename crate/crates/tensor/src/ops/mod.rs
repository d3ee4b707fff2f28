mod binary;
mod conv;
mod layout;
mod matmul;
mod norm;
mod reduce;
mod resize;
mod unary;

pub use layout::concat;
pub(crate) use matmul::gemm;
pub use unary::{log_sigmoid_scalar, sigmoid_scalar, softplus_scalar};

use rayon::prelude::*;

use crate::error::{Result, TensorError};
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

const PAR_THRESHOLD: usize = 1 << 15;

/// out[m,n] = op(a) * op(b). `trans_a` means `a` is stored [k,m]; `trans_b`
/// means `b` is stored [n,k]. Accumulation order per output element is fixed,
/// so results are bit-identical regardless of thread count.
pub(crate) fn gemm<E: Element>(
    a: &[E],
    b: &[E],
    m: usize,
    k: usize,
    n: usize,
    trans_a: bool,
    trans_b: bool,
) -> Vec<E> {
    let mut out = vec![E::zero(); m * n];
    let work = m * n * k;
    match (trans_a, trans_b) {
        (false, false) => {
            let body = |i: usize, row: &mut [E]| {
                for kk in 0..k {
                    let av = a[i * k + kk];
                    let brow = &b[kk * n..kk * n + n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            };
            if work >= PAR_THRESHOLD {
                out.par_chunks_mut(n).enumerate().for_each(|(i, row)| body(i, row));
            } else {
                for (i, row) in out.chunks_mut(n).enumerate() {
                    body(i, row);
                }
            }
        }
        (false, true) => {
            let body = |i: usize, row: &mut [E]| {
                let arow = &a[i * k..i * k + k];
                for (j, o) in row.iter_mut().enumerate() {
                    let brow = &b[j * k..j * k + k];
                    let mut acc = E::zero();
                    for (&av, &bv) in arow.iter().zip(brow) {
                        acc = acc + av * bv;
                    }
                    *o = acc;
                }
            };
            if work >= PAR_THRESHOLD {
                out.par_chunks_mut(n).enumerate().for_each(|(i, row)| body(i, row));
            } else {
                for (i, row) in out.chunks_mut(n).enumerate() {
                    body(i, row);
                }
            }
        }
        (true, false) => {
            // a stored [inner, m]: out[i,:] += a[t*m + i] * b[t*n..]
            let inner = k;
            let body = |i: usize, row: &mut [E]| {
                for t in 0..inner {
                    let av = a[t * m + i];
                    let brow = &b[t * n..t * n + n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            };
            if work >= PAR_THRESHOLD {
                out.par_chunks_mut(n).enumerate().for_each(|(i, row)| body(i, row));
            } else {
                for (i, row) in out.chunks_mut(n).enumerate() {
                    body(i, row);
                }
            }
        }
        (true, true) => unreachable!("gemm TT is never used"),
    }
    out
}

impl<E: Element> Tensor<E> {
    /// Standard 2-D matrix product [m,k] x [k,n] -> [m,n].
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.rank() != 2 {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: 2,
                shape: self.shape().to_vec(),
            });
        }
        if other.rank() != 2 {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: 2,
                shape: other.shape().to_vec(),
            });
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let ad = self.data();
        let bd = other.data();
        let out = gemm(&ad, &bd, m, k, n, false, false);
        record_op("matmul", &[self, other], out, vec![m, n], move |g| {
            // grad_a = g * b^T, grad_b = a^T * g
            let ga = gemm(g, &bd, m, n, k, false, true);
            let gb = gemm(&ad, g, k, m, n, true, false);
            vec![Some(ga), Some(gb)]
        })
    }
}

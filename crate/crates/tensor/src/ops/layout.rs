use crate::error::{Result, TensorError};
use crate::shape::{numel, strides_for};
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

impl<E: Element> Tensor<E> {
    /// Reinterprets the row-major buffer under a new shape (element count
    /// preserved). No data movement.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<E>> {
        if numel(new_shape) != self.numel() {
            return Err(TensorError::Invalid {
                op: "reshape",
                msg: format!(
                    "cannot reshape {:?} ({} elements) into {:?} ({} elements)",
                    self.shape(),
                    self.numel(),
                    new_shape,
                    numel(new_shape)
                ),
            });
        }
        let in_shape = self.shape().to_vec();
        let _ = in_shape;
        record_op(
            "reshape",
            &[self],
            self.to_vec(),
            new_shape.to_vec(),
            move |g| vec![Some(g.to_vec())],
        )
    }

    /// Axis permutation (materialized copy).
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<E>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Invalid {
                op: "permute",
                msg: format!("invalid permutation {:?} for rank {}", perm, rank),
            });
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let perm = perm.to_vec();

        fn permute_raw<E: Element>(
            src: &[E],
            in_shape: &[usize],
            perm: &[usize],
            out_shape: &[usize],
        ) -> Vec<E> {
            let in_strides = strides_for(in_shape);
            // stride of output axis a in the input buffer
            let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
            let n = numel(out_shape);
            let mut out = Vec::with_capacity(n);
            let mut idx = vec![0usize; out_shape.len()];
            let mut off = 0usize;
            for _ in 0..n {
                out.push(src[off]);
                for a in (0..out_shape.len()).rev() {
                    idx[a] += 1;
                    off += gather[a];
                    if idx[a] < out_shape[a] {
                        break;
                    }
                    off -= gather[a] * out_shape[a];
                    idx[a] = 0;
                }
            }
            out
        }

        let out = permute_raw(&self.data(), &in_shape, &perm, &out_shape);
        let inv: Vec<usize> = {
            let mut inv = vec![0usize; rank];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            inv
        };
        let saved_out_shape = out_shape.clone();
        record_op("permute", &[self], out, out_shape, move |g| {
            vec![Some(permute_raw(g, &saved_out_shape, &inv, &in_shape))]
        })
    }

    /// Contiguous sub-range along one axis.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<E>> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!(
                    "slice axis {} range {}..{} out of bounds for {:?}",
                    axis,
                    start,
                    start + len,
                    self.shape()
                ),
            });
        }
        let shape = self.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let extent = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        record_op("slice", &[self], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); outer * extent * inner];
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                let gbase = o * len * inner;
                gx[base..base + len * inner].copy_from_slice(&g[gbase..gbase + len * inner]);
            }
            vec![Some(gx)]
        })
    }

    /// Gathers `indices` along `axis`. Indices may repeat; the gradient
    /// scatter-adds back.
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Tensor<E>> {
        if axis >= self.rank() {
            return Err(TensorError::Invalid {
                op: "index_select",
                msg: format!("axis {} out of range for {:?}", axis, self.shape()),
            });
        }
        let shape = self.shape().to_vec();
        let extent = shape[axis];
        if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
            return Err(TensorError::Invalid {
                op: "index_select",
                msg: format!("index {} out of range for axis extent {}", bad, extent),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &e in indices {
                let base = (o * extent + e) * inner;
                out.extend_from_slice(&xd[base..base + inner]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = indices.len();
        let idx = indices.to_vec();
        record_op("index_select", &[self], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); outer * extent * inner];
            for o in 0..outer {
                for (j, &e) in idx.iter().enumerate() {
                    let base = (o * extent + e) * inner;
                    let gbase = (o * idx.len() + j) * inner;
                    for i in 0..inner {
                        gx[base + i] = gx[base + i] + g[gbase + i];
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Reverses element order along one axis.
    pub fn reverse_axis(&self, axis: usize) -> Result<Tensor<E>> {
        if axis >= self.rank() {
            return Err(TensorError::Invalid {
                op: "reverse_axis",
                msg: format!("axis {} out of range for {:?}", axis, self.shape()),
            });
        }
        let extent = self.shape()[axis];
        let indices: Vec<usize> = (0..extent).rev().collect();
        self.index_select(axis, &indices)
    }
}

/// Concatenates tensors along `axis`. All other extents must match.
pub fn concat<E: Element>(axis: usize, parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
    if parts.is_empty() {
        return Err(TensorError::Invalid {
            op: "concat",
            msg: "no tensors to concatenate".into(),
        });
    }
    let rank = parts[0].rank();
    if axis >= rank {
        return Err(TensorError::Invalid {
            op: "concat",
            msg: format!("axis {} out of range for rank {}", axis, rank),
        });
    }
    let mut out_shape = parts[0].shape().to_vec();
    let mut total = 0usize;
    for p in parts {
        if p.rank() != rank {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: parts[0].shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        for a in 0..rank {
            if a != axis && p.shape()[a] != out_shape[a] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        total += p.shape()[axis];
    }
    out_shape[axis] = total;

    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();

    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (d, &e) in datas.iter().zip(&extents) {
            let base = o * e * inner;
            out.extend_from_slice(&d[base..base + e * inner]);
        }
    }

    let extents_back = extents.clone();
    record_op("concat", parts, out, out_shape, move |g| {
        let mut grads: Vec<Option<Vec<E>>> = extents_back
            .iter()
            .map(|&e| Some(Vec::with_capacity(outer * e * inner)))
            .collect();
        let mut cursor = 0usize;
        for _o in 0..outer {
            for (slot, &e) in grads.iter_mut().zip(&extents_back) {
                let part = slot.as_mut().unwrap();
                part.extend_from_slice(&g[cursor..cursor + e * inner]);
                cursor += e * inner;
            }
        }
        grads
    })
}

use crate::error::Result;
use crate::shape::{broadcast_shapes, broadcast_strides, numel, StridedIter};
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

/// Sums `grad` (laid out as `out_shape`) down to `in_shape`, undoing
/// broadcast expansion. This is the adjoint of broadcasting.
pub(crate) fn reduce_grad_to<E: Element>(
    grad: &[E],
    out_shape: &[usize],
    in_shape: &[usize],
) -> Vec<E> {
    if out_shape == in_shape {
        return grad.to_vec();
    }
    let mut out = vec![E::zero(); numel(in_shape)];
    let strides = broadcast_strides(in_shape, out_shape);
    for (g, off) in grad.iter().zip(StridedIter::new(out_shape, &strides)) {
        out[off] = out[off] + *g;
    }
    out
}

fn binary_op<E: Element>(
    op: &'static str,
    a: &Tensor<E>,
    b: &Tensor<E>,
    f: impl Fn(E, E) -> E,
    backward: impl Fn(&[E], &[E], &[E], &[usize]) -> (Vec<E>, Vec<E>) + 'static,
) -> Result<Tensor<E>> {
    let out_shape = broadcast_shapes(op, a.shape(), b.shape())?;
    let ad = a.data();
    let bd = b.data();
    let n = numel(&out_shape);
    let mut out = Vec::with_capacity(n);
    if a.shape() == out_shape.as_slice() && b.shape() == out_shape.as_slice() {
        for i in 0..n {
            out.push(f(ad[i], bd[i]));
        }
    } else if b.numel() == 1 {
        let bv = bd[0];
        // `a` may still need expansion when out rank exceeds a's rank.
        if a.shape() == out_shape.as_slice() {
            for i in 0..n {
                out.push(f(ad[i], bv));
            }
        } else {
            let sa = broadcast_strides(a.shape(), &out_shape);
            for ia in StridedIter::new(&out_shape, &sa) {
                out.push(f(ad[ia], bv));
            }
        }
    } else {
        let sa = broadcast_strides(a.shape(), &out_shape);
        let sb = broadcast_strides(b.shape(), &out_shape);
        let ita = StridedIter::new(&out_shape, &sa);
        let itb = StridedIter::new(&out_shape, &sb);
        for (ia, ib) in ita.zip(itb) {
            out.push(f(ad[ia], bd[ib]));
        }
    }

    let a_shape = a.shape().to_vec();
    let b_shape = b.shape().to_vec();
    let shape_for_node = out_shape.clone();
    record_op(op, &[a, b], out, out_shape, move |g| {
        let (ga, gb) = backward(g, &ad, &bd, &shape_for_node);
        let ga = reduce_grad_to(&ga, &shape_for_node, &a_shape);
        let gb = reduce_grad_to(&gb, &shape_for_node, &b_shape);
        vec![Some(ga), Some(gb)]
    })
}

/// Materializes `t`'s data expanded to `out_shape` (assumed broadcast-valid).
fn expand<E: Element>(data: &[E], in_shape: &[usize], out_shape: &[usize]) -> Vec<E> {
    if in_shape == out_shape {
        return data.to_vec();
    }
    let strides = broadcast_strides(in_shape, out_shape);
    StridedIter::new(out_shape, &strides).map(|i| data[i]).collect()
}

impl<E: Element> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary_op("add", self, other, |x, y| x + y, |g, _, _, _| {
            (g.to_vec(), g.to_vec())
        })
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        binary_op("sub", self, other, |x, y| x - y, |g, _, _, _| {
            (g.to_vec(), g.iter().map(|v| -*v).collect())
        })
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let a_shape = self.shape().to_vec();
        let b_shape = other.shape().to_vec();
        binary_op("mul", self, other, |x, y| x * y, move |g, ad, bd, out_shape| {
            let be = expand(bd, &b_shape, out_shape);
            let ae = expand(ad, &a_shape, out_shape);
            let ga = g.iter().zip(&be).map(|(g, b)| *g * *b).collect();
            let gb = g.iter().zip(&ae).map(|(g, a)| *g * *a).collect();
            (ga, gb)
        })
    }

    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let a_shape = self.shape().to_vec();
        let b_shape = other.shape().to_vec();
        binary_op("div", self, other, |x, y| x / y, move |g, ad, bd, out_shape| {
            let be = expand(bd, &b_shape, out_shape);
            let ae = expand(ad, &a_shape, out_shape);
            let ga = g.iter().zip(&be).map(|(g, b)| *g / *b).collect();
            let gb = g
                .iter()
                .zip(ae.iter().zip(&be))
                .map(|(g, (a, b))| -(*g) * *a / (*b * *b))
                .collect();
            (ga, gb)
        })
    }

    /// Elementwise maximum of two tensors. Ties route the gradient to `self`.
    pub fn maximum(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let a_shape = self.shape().to_vec();
        let b_shape = other.shape().to_vec();
        binary_op(
            "maximum",
            self,
            other,
            |x, y| if x >= y { x } else { y },
            move |g, ad, bd, out_shape| {
                let ae = expand(ad, &a_shape, out_shape);
                let be = expand(bd, &b_shape, out_shape);
                let mut ga = vec![E::zero(); g.len()];
                let mut gb = vec![E::zero(); g.len()];
                for i in 0..g.len() {
                    if ae[i] >= be[i] {
                        ga[i] = g[i];
                    } else {
                        gb[i] = g[i];
                    }
                }
                (ga, gb)
            },
        )
    }
}

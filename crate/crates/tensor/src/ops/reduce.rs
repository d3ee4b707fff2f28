use crate::error::{Result, TensorError};
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, extent, inner)
}

impl<E: Element> Tensor<E> {
    /// Sum of all elements, as a rank-0 scalar.
    pub fn sum_all(&self) -> Result<Tensor<E>> {
        let xd = self.data();
        let total: E = xd.iter().cloned().sum();
        let n = self.numel();
        record_op("sum_all", &[self], vec![total], Vec::new(), move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean_all(&self) -> Result<Tensor<E>> {
        let n = E::from_f64(self.numel() as f64);
        self.sum_all()?.mul_scalar(E::one() / n)
    }

    fn check_axis(&self, op: &'static str, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(TensorError::Invalid {
                op,
                msg: format!("axis {} out of range for shape {:?}", axis, self.shape()),
            });
        }
        Ok(())
    }

    /// Sum over `axis`, keeping it as extent 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<E>> {
        self.check_axis("sum_axis", axis)?;
        let shape = self.shape().to_vec();
        let (outer, extent, inner) = axis_split(&shape, axis);
        let xd = self.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let base = (o * extent + e) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    out[obase + i] = out[obase + i] + xd[base + i];
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        record_op("sum_axis", &[self], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); outer * extent * inner];
            for o in 0..outer {
                for e in 0..extent {
                    let base = (o * extent + e) * inner;
                    let gbase = o * inner;
                    gx[base..base + inner].copy_from_slice(&g[gbase..gbase + inner]);
                }
            }
            vec![Some(gx)]
        })
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<E>> {
        self.check_axis("mean_axis", axis)?;
        let extent = E::from_f64(self.shape()[axis] as f64);
        self.sum_axis(axis)?.mul_scalar(E::one() / extent)
    }

    /// Max over `axis`, keeping it as extent 1. Gradient flows to the first
    /// maximal element (deterministic tie-breaking).
    pub fn max_axis(&self, axis: usize) -> Result<Tensor<E>> {
        self.check_axis("max_axis", axis)?;
        let shape = self.shape().to_vec();
        let (outer, extent, inner) = axis_split(&shape, axis);
        let xd = self.data();
        let mut out = vec![E::neg_infinity(); outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let base = (o * extent + e) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    if xd[base + i] > out[obase + i] {
                        out[obase + i] = xd[base + i];
                        argmax[obase + i] = e;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        record_op("max_axis", &[self], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); outer * extent * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let e = argmax[o * inner + i];
                    gx[(o * extent + e) * inner + i] = g[o * inner + i];
                }
            }
            vec![Some(gx)]
        })
    }
}

use crate::error::{Result, TensorError};
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

impl<E: Element> Tensor<E> {
    /// Layer normalization over the last axis: per-position mean 0 / variance 1
    /// (biased) before the learnable affine.
    pub fn layer_norm(&self, scale: &Tensor<E>, shift: &Tensor<E>, eps: f64) -> Result<Tensor<E>> {
        if eps <= 0.0 {
            return Err(TensorError::Invalid {
                op: "layer_norm",
                msg: "eps must be > 0".into(),
            });
        }
        let c = *self.shape().last().ok_or(TensorError::Rank {
            op: "layer_norm",
            expected: 1,
            shape: vec![],
        })?;
        if scale.numel() != c || shift.numel() != c {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape().to_vec(),
                rhs: scale.shape().to_vec(),
            });
        }
        let rows = self.numel() / c;
        let xd = self.data();
        let sd = scale.data();
        let bd = shift.data();
        let eps = E::from_f64(eps);
        let cn = E::from_f64(c as f64);

        let mut out = vec![E::zero(); self.numel()];
        let mut xhat = vec![E::zero(); self.numel()];
        let mut ivars = vec![E::zero(); rows];
        for r in 0..rows {
            let row = &xd[r * c..(r + 1) * c];
            let mu: E = row.iter().cloned().sum::<E>() / cn;
            let var: E = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<E>() / cn;
            let ivar = E::one() / (var + eps).sqrt();
            ivars[r] = ivar;
            for i in 0..c {
                let xh = (row[i] - mu) * ivar;
                xhat[r * c + i] = xh;
                out[r * c + i] = xh * sd[i] + bd[i];
            }
        }
        let shape = self.shape().to_vec();
        record_op("layer_norm", &[self, scale, shift], out, shape, move |g| {
            let mut gx = vec![E::zero(); rows * c];
            let mut gscale = vec![E::zero(); c];
            let mut gshift = vec![E::zero(); c];
            for r in 0..rows {
                let gr = &g[r * c..(r + 1) * c];
                let xh = &xhat[r * c..(r + 1) * c];
                let ivar = ivars[r];
                let mut sum_gxh = E::zero();
                let mut sum_gxh_xh = E::zero();
                for i in 0..c {
                    let gxh = gr[i] * sd[i];
                    sum_gxh = sum_gxh + gxh;
                    sum_gxh_xh = sum_gxh_xh + gxh * xh[i];
                    gscale[i] = gscale[i] + gr[i] * xh[i];
                    gshift[i] = gshift[i] + gr[i];
                }
                for i in 0..c {
                    let gxh = gr[i] * sd[i];
                    gx[r * c + i] = ivar / cn * (cn * gxh - sum_gxh - xh[i] * sum_gxh_xh);
                }
            }
            vec![Some(gx), Some(gscale), Some(gshift)]
        })
    }

    /// Batch normalization of [B,C,H,W] per channel.
    ///
    /// Train mode normalizes with batch statistics (biased variance) and
    /// updates `running_mean` / `running_var` in place with the given
    /// momentum; eval mode normalizes with the running statistics. Storing
    /// the biased variance makes eval converge to train output exactly under
    /// repeated identical batches.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &self,
        scale: &Tensor<E>,
        shift: &Tensor<E>,
        running_mean: &Tensor<E>,
        running_var: &Tensor<E>,
        momentum: f64,
        eps: f64,
        training: bool,
    ) -> Result<Tensor<E>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank {
                op: "batch_norm",
                expected: 4,
                shape: self.shape().to_vec(),
            });
        }
        if eps <= 0.0 {
            return Err(TensorError::Invalid {
                op: "batch_norm",
                msg: "eps must be > 0".into(),
            });
        }
        let (b, c, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        if scale.numel() != c || shift.numel() != c || running_mean.numel() != c || running_var.numel() != c {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                lhs: self.shape().to_vec(),
                rhs: scale.shape().to_vec(),
            });
        }
        let m = b * h * w;
        let mn = E::from_f64(m as f64);
        let eps_e = E::from_f64(eps);
        let xd = self.data();
        let sd = scale.data();
        let bd = shift.data();

        let plane = h * w;
        let chan_iter = |buf: &mut dyn FnMut(usize, usize)| {
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * plane;
                    buf(ci, base);
                }
            }
        };

        let (mu, var) = if training {
            let mut mu = vec![E::zero(); c];
            let mut var = vec![E::zero(); c];
            chan_iter(&mut |ci, base| {
                for i in 0..plane {
                    mu[ci] = mu[ci] + xd[base + i];
                }
            });
            for v in mu.iter_mut() {
                *v = *v / mn;
            }
            chan_iter(&mut |ci, base| {
                for i in 0..plane {
                    let d = xd[base + i] - mu[ci];
                    var[ci] = var[ci] + d * d;
                }
            });
            for v in var.iter_mut() {
                *v = *v / mn;
            }
            // side effect: running statistics, never on the tape
            let mom = E::from_f64(momentum);
            running_mean.update_data(|rm| {
                for (r, &m) in rm.iter_mut().zip(&mu) {
                    *r = (E::one() - mom) * *r + mom * m;
                }
            });
            running_var.update_data(|rv| {
                for (r, &v) in rv.iter_mut().zip(&var) {
                    *r = (E::one() - mom) * *r + mom * v;
                }
            });
            (mu, var)
        } else {
            (running_mean.to_vec(), running_var.to_vec())
        };

        let ivar: Vec<E> = var.iter().map(|&v| E::one() / (v + eps_e).sqrt()).collect();
        let mut out = vec![E::zero(); self.numel()];
        let mut xhat = vec![E::zero(); self.numel()];
        chan_iter(&mut |ci, base| {
            for i in 0..plane {
                let xh = (xd[base + i] - mu[ci]) * ivar[ci];
                xhat[base + i] = xh;
                out[base + i] = xh * sd[ci] + bd[ci];
            }
        });

        let shape = self.shape().to_vec();
        record_op("batch_norm", &[self, scale, shift], out, shape, move |g| {
            let mut gx = vec![E::zero(); b * c * plane];
            let mut gscale = vec![E::zero(); c];
            let mut gshift = vec![E::zero(); c];
            let mut sum_gxh = vec![E::zero(); c];
            let mut sum_gxh_xh = vec![E::zero(); c];
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * plane;
                    for i in 0..plane {
                        let gv = g[base + i];
                        let gxh = gv * sd[ci];
                        sum_gxh[ci] = sum_gxh[ci] + gxh;
                        sum_gxh_xh[ci] = sum_gxh_xh[ci] + gxh * xhat[base + i];
                        gscale[ci] = gscale[ci] + gv * xhat[base + i];
                        gshift[ci] = gshift[ci] + gv;
                    }
                }
            }
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * plane;
                    for i in 0..plane {
                        let gxh = g[base + i] * sd[ci];
                        gx[base + i] = if training {
                            ivar[ci] / mn
                                * (mn * gxh - sum_gxh[ci] - xhat[base + i] * sum_gxh_xh[ci])
                        } else {
                            gxh * ivar[ci]
                        };
                    }
                }
            }
            vec![Some(gx), Some(gscale), Some(gshift)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_of_constant_is_zero_pre_affine() {
        let x = Tensor::<f64>::full(&[2, 4], 3.0);
        let scale = Tensor::<f64>::ones(&[4]);
        let shift = Tensor::<f64>::zeros(&[4]);
        let y = x.layer_norm(&scale, &shift, 1e-6).unwrap();
        for v in y.to_vec() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_plus_minus_one() {
        // mean 0, var 1 already: output approaches [1,-1] as eps -> 0
        let x = Tensor::<f64>::from_vec(vec![1.0, -1.0], &[1, 2]).unwrap();
        let scale = Tensor::<f64>::ones(&[2]);
        let shift = Tensor::<f64>::zeros(&[2]);
        let y = x.layer_norm(&scale, &shift, 1e-12).unwrap().to_vec();
        assert!((y[0] - 1.0).abs() < 1e-9);
        assert!((y[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn batch_norm_train_eval_consistency() {
        // after many identical batches the running stats converge to the
        // batch stats, so eval output approaches train output
        let mut rng = crate::init::seeded_rng(5, 0);
        let x = crate::init::uniform_tensor::<f64>(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
        let scale = Tensor::<f64>::ones(&[3]);
        let shift = Tensor::<f64>::zeros(&[3]);
        let rm = Tensor::<f64>::zeros(&[3]);
        let rv = Tensor::<f64>::ones(&[3]);
        let mut train_out = Vec::new();
        for _ in 0..120 {
            train_out = x
                .batch_norm(&scale, &shift, &rm, &rv, 0.1, 1e-5, true)
                .unwrap()
                .to_vec();
        }
        let eval_out = x
            .batch_norm(&scale, &shift, &rm, &rv, 0.1, 1e-5, false)
            .unwrap()
            .to_vec();
        for (t, e) in train_out.iter().zip(&eval_out) {
            assert!((t - e).abs() < 1e-3, "{} vs {}", t, e);
        }
    }

    #[test]
    fn zero_variance_input_is_guarded_by_eps() {
        let x = Tensor::<f64>::full(&[1, 2, 2, 2], 5.0);
        let scale = Tensor::<f64>::ones(&[2]);
        let shift = Tensor::<f64>::zeros(&[2]);
        let rm = Tensor::<f64>::zeros(&[2]);
        let rv = Tensor::<f64>::ones(&[2]);
        let y = x.batch_norm(&scale, &shift, &rm, &rv, 0.1, 1e-5, true).unwrap();
        for v in y.to_vec() {
            assert!(v.is_finite());
        }
    }
}

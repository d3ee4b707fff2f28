use crate::error::{Result, TensorError};
use crate::ops::gemm;
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Unfolds one image (ci,h,w) into [ci*kh*kw, oh*ow] patches, zero-padded.
fn im2col<E: Element>(
    x: &[E],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<E> {
    let mut cols = vec![E::zero(); ci * kh * kw * oh * ow];
    for c in 0..ci {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = (c * h + iy as usize) * w;
                    let dst = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            cols[dst + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatter-adds patch columns back into an image.
fn col2im<E: Element>(
    cols: &[E],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<E> {
    let mut x = vec![E::zero(); ci * h * w];
    for c in 0..ci {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = (c * h + iy as usize) * w;
                    let src = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x[dst + ix as usize] = x[dst + ix as usize] + cols[src + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

impl<E: Element> Tensor<E> {
    /// 2-D cross-correlation: x [B,Ci,H,W] with kernel w [Co,Ci,kh,kw].
    /// Odd kernels only; `pad = (k-1)/2` with stride 1 preserves extents.
    pub fn conv2d(&self, weight: &Tensor<E>, stride: usize, pad: usize) -> Result<Tensor<E>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: self.shape().to_vec(),
            });
        }
        if weight.rank() != 4 {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: weight.shape().to_vec(),
            });
        }
        let (b, ci, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (co, wci, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        if ci != wci {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!("kernel extents must be odd, got {}x{}", kh, kw),
            });
        }
        if stride == 0 {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: "stride must be >= 1".into(),
            });
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let oh = conv_out_extent(h, kh, stride, pad);
        let ow = conv_out_extent(w, kw, stride, pad);
        let patch = ci * kh * kw;
        let xd = self.data();
        let wd = weight.data();

        let mut out = vec![E::zero(); b * co * oh * ow];
        for bi in 0..b {
            let cols = im2col(&xd[bi * ci * h * w..(bi + 1) * ci * h * w], ci, h, w, kh, kw, stride, pad, oh, ow);
            let y = gemm(&wd, &cols, co, patch, oh * ow, false, false);
            out[bi * co * oh * ow..(bi + 1) * co * oh * ow].copy_from_slice(&y);
        }

        let out_shape = vec![b, co, oh, ow];
        record_op("conv2d", &[self, weight], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); b * ci * h * w];
            let mut gw = vec![E::zero(); co * patch];
            for bi in 0..b {
                let gy = &g[bi * co * oh * ow..(bi + 1) * co * oh * ow];
                // weight grad: gy [co, ohow] x cols^T
                let cols = im2col(&xd[bi * ci * h * w..(bi + 1) * ci * h * w], ci, h, w, kh, kw, stride, pad, oh, ow);
                let gw_b = gemm(gy, &cols, co, oh * ow, patch, false, true);
                for (a, v) in gw.iter_mut().zip(&gw_b) {
                    *a = *a + *v;
                }
                // input grad: W^T x gy, folded back
                let gcols = gemm(&wd, gy, patch, co, oh * ow, true, false);
                let gxb = col2im(&gcols, ci, h, w, kh, kw, stride, pad, oh, ow);
                gx[bi * ci * h * w..(bi + 1) * ci * h * w].copy_from_slice(&gxb);
            }
            vec![Some(gx), Some(gw)]
        })
    }

    /// Transposed convolution: x [B,Ci,h,w] with kernel w [Ci,Co,kh,kw].
    /// Output extents are `(h-1)*stride + kh - 2*pad`. With `kh = stride` and
    /// `pad = 0` this is an exact integer upsampling.
    pub fn conv_transpose2d(
        &self,
        weight: &Tensor<E>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<E>> {
        if self.rank() != 4 || weight.rank() != 4 {
            return Err(TensorError::Rank {
                op: "conv_transpose2d",
                expected: 4,
                shape: if self.rank() != 4 {
                    self.shape().to_vec()
                } else {
                    weight.shape().to_vec()
                },
            });
        }
        let (b, ci, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (wci, co, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        if ci != wci {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if (h - 1) * stride + kh < 2 * pad + 1 {
            return Err(TensorError::Invalid {
                op: "conv_transpose2d",
                msg: "output extents would be empty".into(),
            });
        }
        let out_h = (h - 1) * stride + kh - 2 * pad;
        let out_w = (w - 1) * stride + kw - 2 * pad;
        let xd = self.data();
        let wd = weight.data();

        let scatter = |x: &[E], out: &mut [E]| {
            for bi in 0..b {
                for c in 0..ci {
                    for iy in 0..h {
                        for ix in 0..w {
                            let v = x[((bi * ci + c) * h + iy) * w + ix];
                            for o in 0..co {
                                let wbase = ((c * co + o) * kh) * kw;
                                let obase = ((bi * co + o) * out_h) * out_w;
                                for ki in 0..kh {
                                    let oy = (iy * stride + ki) as isize - pad as isize;
                                    if oy < 0 || oy >= out_h as isize {
                                        continue;
                                    }
                                    for kj in 0..kw {
                                        let ox = (ix * stride + kj) as isize - pad as isize;
                                        if ox >= 0 && ox < out_w as isize {
                                            let oi = obase + oy as usize * out_w + ox as usize;
                                            out[oi] = out[oi] + v * wd[wbase + ki * kw + kj];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
        let mut out = vec![E::zero(); b * co * out_h * out_w];
        scatter(&xd, &mut out);

        let out_shape = vec![b, co, out_h, out_w];
        record_op("conv_transpose2d", &[self, weight], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); b * ci * h * w];
            let mut gw = vec![E::zero(); ci * co * kh * kw];
            for bi in 0..b {
                for c in 0..ci {
                    for iy in 0..h {
                        for ix in 0..w {
                            let xv = xd[((bi * ci + c) * h + iy) * w + ix];
                            let mut acc = E::zero();
                            for o in 0..co {
                                let wbase = ((c * co + o) * kh) * kw;
                                let obase = ((bi * co + o) * out_h) * out_w;
                                for ki in 0..kh {
                                    let oy = (iy * stride + ki) as isize - pad as isize;
                                    if oy < 0 || oy >= out_h as isize {
                                        continue;
                                    }
                                    for kj in 0..kw {
                                        let ox = (ix * stride + kj) as isize - pad as isize;
                                        if ox >= 0 && ox < out_w as isize {
                                            let gv = g[obase + oy as usize * out_w + ox as usize];
                                            acc = acc + gv * wd[wbase + ki * kw + kj];
                                            let wi = wbase + ki * kw + kj;
                                            gw[wi] = gw[wi] + gv * xv;
                                        }
                                    }
                                }
                            }
                            let xi = ((bi * ci + c) * h + iy) * w + ix;
                            gx[xi] = gx[xi] + acc;
                        }
                    }
                }
            }
            vec![Some(gx), Some(gw)]
        })
    }
}

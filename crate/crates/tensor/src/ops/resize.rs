use crate::error::{Result, TensorError};
use crate::tape::record_op;
use crate::tensor::Tensor;
use crate::Element;

/// Per-output-coordinate interpolation taps under the align-corners=false
/// convention: source position (i + 0.5) * in/out - 0.5, clamped.
fn bilinear_taps(in_extent: usize, out_extent: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_extent as f64 / out_extent as f64;
    (0..out_extent)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let src = src.max(0.0);
            let i0 = (src.floor() as usize).min(in_extent - 1);
            let i1 = (i0 + 1).min(in_extent - 1);
            let frac = (src - i0 as f64).clamp(0.0, 1.0);
            (i0, i1, frac)
        })
        .collect()
}

impl<E: Element> Tensor<E> {
    /// Bilinear upsampling of [B,C,H,W] to (out_h, out_w), align-corners=false.
    /// Constant inputs stay constant; the gradient is the transpose of the
    /// interpolation weights.
    pub fn bilinear_upsample(&self, out_h: usize, out_w: usize) -> Result<Tensor<E>> {
        if self.rank() != 4 {
            return Err(TensorError::Rank {
                op: "bilinear_upsample",
                expected: 4,
                shape: self.shape().to_vec(),
            });
        }
        let (b, c, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        if out_h < h || out_w < w {
            return Err(TensorError::Invalid {
                op: "bilinear_upsample",
                msg: format!("output {}x{} smaller than input {}x{}", out_h, out_w, h, w),
            });
        }
        if out_h == h && out_w == w {
            // nothing to do; keep the graph simple
            return self.reshape(&[b, c, h, w]);
        }
        let ys = bilinear_taps(h, out_h);
        let xs = bilinear_taps(w, out_w);
        let xd = self.data();
        let mut out = vec![E::zero(); b * c * out_h * out_w];
        for bc in 0..b * c {
            let src = &xd[bc * h * w..(bc + 1) * h * w];
            let dst = &mut out[bc * out_h * out_w..(bc + 1) * out_h * out_w];
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let v00 = src[y0 * w + x0].to_f64();
                    let v01 = src[y0 * w + x1].to_f64();
                    let v10 = src[y1 * w + x0].to_f64();
                    let v11 = src[y1 * w + x1].to_f64();
                    let top = v00 * (1.0 - fx) + v01 * fx;
                    let bot = v10 * (1.0 - fx) + v11 * fx;
                    dst[oy * out_w + ox] = E::from_f64(top * (1.0 - fy) + bot * fy);
                }
            }
        }
        let out_shape = vec![b, c, out_h, out_w];
        record_op("bilinear_upsample", &[self], out, out_shape, move |g| {
            let mut gx = vec![E::zero(); b * c * h * w];
            for bc in 0..b * c {
                let gdst = &g[bc * out_h * out_w..(bc + 1) * out_h * out_w];
                let gsrc = &mut gx[bc * h * w..(bc + 1) * h * w];
                for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                        let gv = gdst[oy * out_w + ox].to_f64();
                        let mut scatter = |iy: usize, ix: usize, wgt: f64| {
                            let idx = iy * w + ix;
                            gsrc[idx] = gsrc[idx] + E::from_f64(gv * wgt);
                        };
                        scatter(y0, x0, (1.0 - fy) * (1.0 - fx));
                        scatter(y0, x1, (1.0 - fy) * fx);
                        scatter(y1, x0, fy * (1.0 - fx));
                        scatter(y1, x1, fy * fx);
                    }
                }
            }
            vec![Some(gx)]
        })
    }
}

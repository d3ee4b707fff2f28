//! Detail-preserving contextual fusion for the decoder.
//!
//! The low-resolution map is bilinearly upsampled to the high-resolution
//! extents, both maps are split into channel segments, and each segment pair
//! is blended with a learned sigmoid gate: o_i = beta_i*l_i + (1-beta_i)*h_i.
//! beta near 0 keeps high-resolution detail, beta near 1 keeps context. A
//! 3x3 conv block refines the concatenated result. The `add` and `concat`
//! strategies replace the gate for the fusion-ablation harness.

use rand_chacha::ChaCha8Rng;
use samamba_tensor::{concat, Element, Tensor};

use crate::blocks::{Activation, Conv2d, ConvBlock};
use crate::config::FusionKind;
use crate::{push_param, ModelError, ParamList, Result};

pub struct Dpcf<E: Element> {
    /// Per-segment gate logits (alpha); beta = sigmoid(alpha).
    pub alpha: Tensor<E>,
    /// 1x1 channel alignment for the low-res input, present only when its
    /// width differs from the high-res width.
    align_low: Option<Conv2d<E>>,
    refine: ConvBlock<E>,
    segments: usize,
    width: usize,
    fusion: FusionKind,
}

impl<E: Element> Dpcf<E> {
    pub fn new(
        width: usize,
        low_width: usize,
        segments: usize,
        fusion: FusionKind,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if width % segments != 0 {
            return Err(ModelError::Config(format!(
                "fusion width {} not divisible by segment count {}",
                width, segments
            )));
        }
        let align_low = if low_width != width {
            Some(Conv2d::new(low_width, width, 1, 1, 0, rng))
        } else {
            None
        };
        let refine_in = match fusion {
            FusionKind::Concat => 2 * width,
            _ => width,
        };
        // alpha starts at 0: beta = 0.5, an unbiased blend
        let alpha = Tensor::zeros(&[segments]);
        alpha.set_requires_grad(true);
        Ok(Dpcf {
            alpha,
            align_low,
            refine: ConvBlock::new(refine_in, width, 3, Activation::Silu, rng)?,
            segments,
            width,
            fusion,
        })
    }

    /// Upsamples and channel-aligns the low-res input, then fuses it with the
    /// high-res input per strategy. The fused map before refinement is also
    /// returned by `fuse_only` for verification.
    pub fn forward(
        &self,
        f_high: &Tensor<E>,
        f_low: &Tensor<E>,
        training: bool,
    ) -> Result<Tensor<E>> {
        let fused = self.fuse_only(f_high, f_low)?;
        self.refine.forward(&fused, training)
    }

    /// The gated blend (or add/concat variant) without the refinement conv.
    pub fn fuse_only(&self, f_high: &Tensor<E>, f_low: &Tensor<E>) -> Result<Tensor<E>> {
        let (h, w) = (f_high.shape()[2], f_high.shape()[3]);
        if f_low.shape()[2] > h || f_low.shape()[3] > w {
            return Err(ModelError::Config(format!(
                "low-res extents {:?} exceed high-res extents {:?}",
                &f_low.shape()[2..],
                &f_high.shape()[2..]
            )));
        }
        let mut low = f_low.bilinear_upsample(h, w)?;
        if let Some(align) = &self.align_low {
            low = align.forward(&low)?;
        }
        match self.fusion {
            FusionKind::Add => Ok(f_high.add(&low)?),
            FusionKind::Concat => Ok(concat(1, &[f_high, &low])?),
            FusionKind::Adaptive => {
                let seg = self.width / self.segments;
                let mut fused = Vec::with_capacity(self.segments);
                for i in 0..self.segments {
                    let hi = f_high.slice(1, i * seg, seg)?;
                    let li = low.slice(1, i * seg, seg)?;
                    let beta = self.alpha.slice(0, i, 1)?.sigmoid()?;
                    let one_minus = beta.neg()?.add_scalar(E::one())?;
                    fused.push(li.mul(&beta)?.add(&hi.mul(&one_minus)?)?);
                }
                let refs: Vec<&Tensor<E>> = fused.iter().collect();
                Ok(concat(1, &refs)?)
            }
        }
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        if self.fusion == FusionKind::Adaptive {
            push_param(out, prefix, "alpha", &self.alpha);
        }
        if let Some(align) = &self.align_low {
            align.collect_params(&format!("{}.align_low", prefix), out);
        }
        self.refine.collect_params(&format!("{}.refine", prefix), out);
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mut total = self.refine.macs(h, w);
        if let Some(align) = &self.align_low {
            total += align.macs(h, w);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use samamba_tensor::init::{seeded_rng, uniform_tensor};

    fn make(fusion: FusionKind) -> (Dpcf<f64>, Tensor<f64>, Tensor<f64>) {
        let mut rng = seeded_rng(81, 0);
        let dpcf = Dpcf::<f64>::new(8, 8, 4, fusion, &mut rng).unwrap();
        let high = uniform_tensor::<f64>(&mut rng, &[2, 8, 8, 8], -1.0, 1.0);
        let low = uniform_tensor::<f64>(&mut rng, &[2, 8, 4, 4], -1.0, 1.0);
        (dpcf, high, low)
    }

    #[test]
    fn saturated_gate_keeps_high_res_segments() {
        let (dpcf, high, low) = make(FusionKind::Adaptive);
        dpcf.alpha.update_data(|d| d.fill(-20.0));
        let fused = dpcf.fuse_only(&high, &low).unwrap();
        for (f, h) in fused.to_vec().iter().zip(high.to_vec()) {
            assert!((f - h).abs() < 1e-8, "{} vs {}", f, h);
        }
    }

    #[test]
    fn neutral_gate_is_exact_mean() {
        let (dpcf, high, low) = make(FusionKind::Adaptive);
        // alpha = 0 by initialization: beta = 0.5 exactly
        let fused = dpcf.fuse_only(&high, &low).unwrap().to_vec();
        let up = low.bilinear_upsample(8, 8).unwrap().to_vec();
        let hd = high.to_vec();
        for i in 0..fused.len() {
            let mean = 0.5 * (hd[i] + up[i]);
            assert!((fused[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn fused_values_stay_in_min_max_envelope() {
        let (dpcf, high, low) = make(FusionKind::Adaptive);
        let mut rng = seeded_rng(82, 0);
        for trial in 0..5 {
            dpcf.alpha.update_data(|d| {
                for v in d.iter_mut() {
                    *v = (trial as f64 - 2.0) * 1.7 + 0.3;
                }
            });
            let _ = &mut rng;
            let fused = dpcf.fuse_only(&high, &low).unwrap().to_vec();
            let up = low.bilinear_upsample(8, 8).unwrap().to_vec();
            let hd = high.to_vec();
            for i in 0..fused.len() {
                let lo = hd[i].min(up[i]);
                let hi = hd[i].max(up[i]);
                assert!(
                    fused[i] >= lo - 1e-12 && fused[i] <= hi + 1e-12,
                    "{} outside [{}, {}]",
                    fused[i],
                    lo,
                    hi
                );
            }
        }
    }

    #[test]
    fn add_and_concat_variants() {
        let (dpcf, high, low) = make(FusionKind::Add);
        let fused = dpcf.fuse_only(&high, &low).unwrap();
        let up = low.bilinear_upsample(8, 8).unwrap();
        for ((f, h), u) in fused.to_vec().iter().zip(high.to_vec()).zip(up.to_vec()) {
            assert!((f - (h + u)).abs() < 1e-15);
        }
        let y = dpcf.forward(&high, &low, true).unwrap();
        assert_eq!(y.shape(), &[2, 8, 8, 8]);

        let (dpcf, high, low) = make(FusionKind::Concat);
        let fused = dpcf.fuse_only(&high, &low).unwrap();
        assert_eq!(fused.shape(), &[2, 16, 8, 8]);
        let y = dpcf.forward(&high, &low, true).unwrap();
        assert_eq!(y.shape(), &[2, 8, 8, 8]);
    }

    #[test]
    fn channel_alignment_when_widths_differ() {
        let mut rng = seeded_rng(83, 0);
        let dpcf = Dpcf::<f64>::new(8, 12, 4, FusionKind::Adaptive, &mut rng).unwrap();
        let high = uniform_tensor::<f64>(&mut rng, &[1, 8, 6, 6], -1.0, 1.0);
        let low = uniform_tensor::<f64>(&mut rng, &[1, 12, 3, 3], -1.0, 1.0);
        let y = dpcf.forward(&high, &low, true).unwrap();
        assert_eq!(y.shape(), &[1, 8, 6, 6]);
    }

    #[test]
    fn oversized_low_res_rejected() {
        let (dpcf, high, _) = make(FusionKind::Adaptive);
        let mut rng = seeded_rng(84, 0);
        let big = uniform_tensor::<f64>(&mut rng, &[2, 8, 16, 16], -1.0, 1.0);
        assert!(dpcf.fuse_only(&high, &big).is_err());
    }

    #[test]
    fn gate_gradient_reaches_alpha() {
        let (dpcf, high, low) = make(FusionKind::Adaptive);
        let mut params = Vec::new();
        dpcf.collect_params("dpcf", &mut params);
        let report = samamba_tensor::check_param_grads(
            || dpcf.forward(&high, &low, true)?.pow_scalar(2.0)?.sum_all(),
            &params,
            8,
            1e-5,
            84,
        )
        .unwrap();
        report.ensure("dpcf params", 1e-4).unwrap();
    }
}

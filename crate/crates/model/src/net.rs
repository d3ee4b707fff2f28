//! The assembled segmentation network: encoder with adapters, CSI modules on
//! the four skip paths, three decoder fusion stages from deepest to
//! shallowest, and a deconvolution head back to full resolution.

use rand_chacha::ChaCha8Rng;
use samamba_tensor::init::seeded_rng;
use samamba_tensor::{Element, Tensor};

use crate::blocks::{Conv2d, ConvTranspose2d};
use crate::config::ModelConfig;
use crate::csi::Csi;
use crate::dpcf::Dpcf;
use crate::encoder::Encoder;
use crate::{ParamList, Result};

enum Skip<E: Element> {
    Csi(Csi<E>),
    /// Plain 1x1 alignment, used by the no-CSI ablation.
    Plain(Conv2d<E>),
}

impl<E: Element> Skip<E> {
    fn forward(&self, x: &Tensor<E>, training: bool) -> Result<Tensor<E>> {
        match self {
            Skip::Csi(csi) => csi.forward(x, training),
            Skip::Plain(conv) => Ok(conv.forward(x)?),
        }
    }

    fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        match self {
            Skip::Csi(csi) => csi.collect_params(prefix, out),
            Skip::Plain(conv) => conv.collect_params(&format!("{}.align", prefix), out),
        }
    }

    fn macs(&self, h: usize, w: usize) -> u64 {
        match self {
            Skip::Csi(csi) => csi.macs(h, w),
            Skip::Plain(conv) => conv.macs(h, w),
        }
    }
}

pub struct SaMamba<E: Element> {
    pub cfg: ModelConfig,
    encoder: Encoder<E>,
    skips: Vec<Skip<E>>,
    fusions: Vec<Dpcf<E>>,
    head_deconv: ConvTranspose2d<E>,
    head_conv: Conv2d<E>,
    head_out: Conv2d<E>,
}

impl<E: Element> SaMamba<E> {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(cfg.seed, 0x5A);
        Self::with_rng(cfg, &mut rng)
    }

    pub fn with_rng(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.csi_width;
        let encoder = Encoder::new(cfg, rng)?;
        let mut skips = Vec::with_capacity(4);
        for &width in &cfg.stage_widths {
            skips.push(if cfg.use_csi {
                Skip::Csi(Csi::new(width, cfg, rng)?)
            } else {
                Skip::Plain(Conv2d::new(width, c, 1, 1, 0, rng))
            });
        }
        // three fusion stages: (skip3, skip4) -> (skip2, ..) -> (skip1, ..)
        let fusions = (0..3)
            .map(|_| Dpcf::new(c, c, cfg.dpcf_segments, cfg.fusion, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(SaMamba {
            cfg: cfg.clone(),
            encoder,
            skips,
            fusions,
            head_deconv: ConvTranspose2d::new(c, cfg.head_width, 4, 4, rng),
            head_conv: Conv2d::new(cfg.head_width, cfg.head_width, 3, 1, 1, rng),
            head_out: Conv2d::new(cfg.head_width, 1, 1, 1, 0, rng),
        })
    }

    /// image: [B,3,H,W] -> logits [B,1,H,W].
    pub fn forward(&self, image: &Tensor<E>, training: bool) -> Result<Tensor<E>> {
        let pyramid = self.encoder.forward(image, training)?;
        let mut skipped = Vec::with_capacity(4);
        for (map, skip) in pyramid.iter().zip(&self.skips) {
            skipped.push(skip.forward(map, training)?);
        }
        // deepest context first, fused into progressively finer detail
        let mut deep = skipped[3].clone();
        for (i, fusion) in self.fusions.iter().enumerate() {
            let high = &skipped[2 - i];
            deep = fusion.forward(high, &deep, training)?;
        }
        let y = self.head_deconv.forward(&deep)?.silu()?;
        let y = self.head_conv.forward(&y)?.silu()?;
        Ok(self.head_out.forward(&y)?)
    }

    pub fn named_params(&self) -> ParamList<E> {
        let mut out = Vec::new();
        self.encoder.collect_params("encoder", &mut out);
        for (i, skip) in self.skips.iter().enumerate() {
            skip.collect_params(&format!("skip{}", i + 1), &mut out);
        }
        for (i, fusion) in self.fusions.iter().enumerate() {
            fusion.collect_params(&format!("dpcf{}", i + 1), &mut out);
        }
        self.head_deconv.collect_params("head.deconv", &mut out);
        self.head_conv.collect_params("head.conv", &mut out);
        self.head_out.collect_params("head.out", &mut out);
        out
    }

    /// Parameters that receive gradients (excludes running statistics and
    /// frozen backbone weights).
    pub fn trainable_params(&self) -> Vec<Tensor<E>> {
        self.named_params()
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t)
            .collect()
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.named_params() {
            t.zero_grad();
        }
    }

    /// (total parameter count, trainable parameter count). Running statistics
    /// are excluded from both.
    pub fn param_counts(&self) -> (usize, usize) {
        let mut total = 0;
        let mut trainable = 0;
        for (name, t) in self.named_params() {
            if name.contains("running_") {
                continue;
            }
            total += t.numel();
            if t.requires_grad() {
                trainable += t.numel();
            }
        }
        (total, trainable)
    }

    /// Analytic multiply-accumulate count for one forward pass at batch 1.
    pub fn count_macs(&self, h: usize, w: usize) -> u64 {
        let mut total = self.encoder.macs(h, w);
        let extents = [(h / 4, w / 4), (h / 8, w / 8), (h / 16, w / 16), (h / 32, w / 32)];
        for (skip, &(sh, sw)) in self.skips.iter().zip(&extents) {
            total += skip.macs(sh, sw);
        }
        for (i, fusion) in self.fusions.iter().enumerate() {
            let (fh, fw) = extents[2 - i];
            total += fusion.macs(fh, fw);
        }
        total += self.head_deconv.macs(h / 4, w / 4);
        total += self.head_conv.macs(h, w) + self.head_out.macs(h, w);
        total
    }

    pub fn load_named_params(&self, entries: &[(String, Tensor<E>)]) -> Result<()> {
        use std::collections::HashMap;
        let own = self.named_params();
        let mut incoming: HashMap<&str, &Tensor<E>> =
            entries.iter().map(|(k, v)| (k.as_str(), v)).collect();
        let mut missing = Vec::new();
        let mut mismatched = Vec::new();
        for (name, t) in &own {
            match incoming.remove(name.as_str()) {
                Some(src) if src.shape() == t.shape() => t.set_data(src.to_vec()),
                Some(src) => mismatched.push(format!(
                    "{} (checkpoint {:?}, model {:?})",
                    name,
                    src.shape(),
                    t.shape()
                )),
                None => missing.push(name.clone()),
            }
        }
        let extra: Vec<String> = incoming.keys().map(|k| k.to_string()).collect();
        if !missing.is_empty() || !mismatched.is_empty() || !extra.is_empty() {
            return Err(crate::ModelError::Config(format!(
                "checkpoint/config mismatch; missing: [{}]; shape-mismatched: [{}]; unexpected: [{}]",
                missing.join(", "),
                mismatched.join(", "),
                extra.join(", ")
            )));
        }
        Ok(())
    }
}

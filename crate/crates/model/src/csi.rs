//! Cross-channel state-space interaction, placed on the skip connections.
//!
//! Pipeline: 1x1 channel alignment -> raster-scan flatten -> split into
//! per-head segments -> per head a bidirectional selective scan followed by
//! LN and an MLP with a gamma-scaled residual -> cross-channel recombination
//! (a fixed permutation interleaving channels across heads) -> pointwise
//! fusion conv + BN + SiLU -> channel attention gate -> spatial attention
//! gate.

use rand_chacha::ChaCha8Rng;
use samamba_tensor::{concat, Element, Tensor};

use crate::blocks::{
    flatten_spatial, unflatten_spatial, Activation, BatchNorm2d, ChannelAttention, Conv2d,
    LayerNorm, Mlp, SpatialAttention,
};
use crate::config::ModelConfig;
use crate::selective::BidirectionalSsm;
use crate::{push_param, ModelError, ParamList, Result};

/// Output channel k = j*heads + i holds input channel i*(c/heads) + j:
/// channel j of head i. A bijection; for the configured widths it is not an
/// involution, so the inverse map below is genuinely different.
pub fn recombine_perm(channels: usize, heads: usize) -> Vec<usize> {
    let per_head = channels / heads;
    (0..channels)
        .map(|k| {
            let j = k / heads;
            let i = k % heads;
            i * per_head + j
        })
        .collect()
}

pub fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

struct CsiHead<E: Element> {
    ssm: BidirectionalSsm<E>,
    norm: LayerNorm<E>,
    mlp: Mlp<E>,
    gamma: Tensor<E>,
}

pub struct Csi<E: Element> {
    align: Conv2d<E>,
    heads: Vec<CsiHead<E>>,
    fuse: Conv2d<E>,
    fuse_bn: BatchNorm2d<E>,
    channel_attn: ChannelAttention<E>,
    spatial_attn: SpatialAttention<E>,
    perm: Vec<usize>,
    width: usize,
    head_count: usize,
    pos_embed: bool,
    bidirectional: bool,
}

impl<E: Element> Csi<E> {
    pub fn new(c_in: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let c = cfg.csi_width;
        let heads = cfg.csi_heads;
        if c % heads != 0 {
            return Err(ModelError::Config(format!(
                "CSI width {} not divisible by head count {}",
                c, heads
            )));
        }
        let per_head = c / heads;
        let head_blocks = (0..heads)
            .map(|_| {
                let gamma = Tensor::ones(&[]);
                gamma.set_requires_grad(true);
                CsiHead {
                    ssm: BidirectionalSsm::new(per_head, cfg.state_dim, cfg.exact_zoh, rng),
                    norm: LayerNorm::new(per_head),
                    mlp: Mlp::new(per_head, cfg.mlp_ratio, rng),
                    gamma,
                }
            })
            .collect();
        Ok(Csi {
            align: Conv2d::new(c_in, c, 1, 1, 0, rng),
            heads: head_blocks,
            fuse: Conv2d::new(c, c, 1, 1, 0, rng),
            fuse_bn: BatchNorm2d::new(c),
            channel_attn: ChannelAttention::new(c, cfg.attn_ratio, cfg.avg_max_pool, rng),
            spatial_attn: SpatialAttention::new(cfg.spatial_kernel, rng)?,
            perm: recombine_perm(c, heads),
            width: c,
            head_count: heads,
            pos_embed: cfg.pos_embed,
            bidirectional: cfg.bidirectional,
        })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// x: [B,C_in,H,W] -> [B,csi_width,H,W].
    pub fn forward(&self, x: &Tensor<E>, training: bool) -> Result<Tensor<E>> {
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let aligned = self.align.forward(x)?;
        let mut seq = flatten_spatial(&aligned)?; // [B, HW, C]
        if self.pos_embed {
            seq = seq.add(&sinusoidal_embedding::<E>(h * w, self.width))?;
        }
        let per_head = self.width / self.head_count;
        let mut outputs = Vec::with_capacity(self.head_count);
        for (i, head) in self.heads.iter().enumerate() {
            let segment = seq.slice(2, i * per_head, per_head)?;
            let scanned = if self.bidirectional {
                head.ssm.forward(&segment)?
            } else {
                head.ssm.fwd.forward(&segment)?
            };
            let refined = head.mlp.forward(&head.norm.forward(&scanned)?)?;
            let residual = segment.mul(&head.gamma)?;
            outputs.push(refined.add(&residual)?);
        }
        let out_refs: Vec<&Tensor<E>> = outputs.iter().collect();
        let merged = concat(2, &out_refs)?; // [B, HW, C] in head-major order
        let spatial = unflatten_spatial(&merged, h, w)?;
        let recombined = spatial.index_select(1, &self.perm)?;
        let fused = self.fuse.forward(&recombined)?;
        let fused = self.fuse_bn.forward(&fused, training)?.silu()?;
        let fused = fused.mul(&self.channel_attn.gate(&fused)?)?;
        let gated = fused.mul(&self.spatial_attn.gate(&fused)?)?;
        Ok(gated)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        self.align.collect_params(&format!("{}.align", prefix), out);
        for (i, head) in self.heads.iter().enumerate() {
            let hp = format!("{}.head{}", prefix, i);
            head.ssm.collect_params(&format!("{}.ssm", hp), out);
            head.norm.collect_params(&format!("{}.norm", hp), out);
            head.mlp.collect_params(&format!("{}.mlp", hp), out);
            push_param(out, &hp, "gamma", &head.gamma);
        }
        self.fuse.collect_params(&format!("{}.fuse", prefix), out);
        self.fuse_bn.collect_params(&format!("{}.fuse_bn", prefix), out);
        self.channel_attn
            .collect_params(&format!("{}.channel_attn", prefix), out);
        self.spatial_attn
            .collect_params(&format!("{}.spatial_attn", prefix), out);
    }

    pub fn macs(&self, in_h: usize, in_w: usize) -> u64 {
        let hw = in_h * in_w;
        let mut total = self.align.macs(in_h, in_w);
        for head in &self.heads {
            let scan = if self.bidirectional {
                head.ssm.macs(hw)
            } else {
                head.ssm.fwd.macs(hw)
            };
            total += scan + head.mlp.macs(hw);
        }
        total += self.fuse.macs(in_h, in_w);
        total += self.channel_attn.macs(1) + self.spatial_attn.macs(in_h, in_w);
        total
    }
}

/// Fixed sinusoidal position features, one row per sequence position.
fn sinusoidal_embedding<E: Element>(len: usize, dim: usize) -> Tensor<E> {
    let mut data = vec![E::zero(); len * dim];
    for p in 0..len {
        for d in 0..dim {
            let freq = 1.0 / 10_000f64.powf((2 * (d / 2)) as f64 / dim as f64);
            let angle = p as f64 * freq;
            data[p * dim + d] = E::from_f64(if d % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::from_vec(data, &[1, len, dim]).expect("well-formed embedding")
}

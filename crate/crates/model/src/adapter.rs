//! Feature selection adapter: each channel map is reweighted by its clamped
//! cosine similarity to a learnable task embedding, mixed across channels,
//! and added back onto the input through a residual connection.

use rand_chacha::ChaCha8Rng;
use samamba_tensor::init::normal_tensor;
use samamba_tensor::{Element, Tensor};

use crate::blocks::{flatten_spatial, unflatten_spatial, Conv2d};
use crate::{push_param, ParamList, Result};

/// Clamped cosine similarity max(0, a·b / (|a||b|)); zero vectors score 0.
pub fn cosine_sim<E: Element>(a: &[E], b: &[E]) -> E {
    debug_assert_eq!(a.len(), b.len());
    let dot: E = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na: E = a.iter().map(|&x| x * x).sum::<E>().sqrt();
    let nb: E = b.iter().map(|&x| x * x).sum::<E>().sqrt();
    let eps = E::from_f64(1e-30);
    if na <= eps || nb <= eps {
        log::warn!("cosine_sim: zero-norm vector, similarity defined as 0");
        return E::zero();
    }
    (dot / (na * nb)).max(E::zero())
}

pub struct FsAdapter<E: Element> {
    /// Task embedding, one weight per channel.
    pub xi: Tensor<E>,
    /// Channel mixing matrix [C, C].
    pub p: Tensor<E>,
    pub conv: Conv2d<E>,
    channels: usize,
}

impl<E: Element> FsAdapter<E> {
    pub fn new(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let xi = normal_tensor::<E>(rng, &[channels], 0.0, 1.0);
        // near-zero start: the adapter begins as an identity-plus-epsilon map
        let p = normal_tensor::<E>(rng, &[channels, channels], 0.0, 0.02);
        xi.set_requires_grad(true);
        p.set_requires_grad(true);
        FsAdapter {
            xi,
            p,
            conv: Conv2d::new(channels, channels, 1, 1, 0, rng),
            channels,
        }
    }

    /// x: [B,C,H,W] -> [B,C,H,W], shape-preserving by construction.
    ///
    /// Each channel map t_i in R^{HW} is scaled by
    /// sim(t_i, xi_i * ones(HW)) = max(0, sign-aligned mean / norm ratio);
    /// positive rescaling of xi leaves every similarity unchanged.
    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let hw = h * w;
        let seq = flatten_spatial(x)?; // [B, HW, C]

        // per-channel sums and square norms over the spatial axis
        let sums = seq.sum_axis(1)?; // [B, 1, C]
        let sqnorm = seq.mul(&seq)?.sum_axis(1)?; // [B, 1, C]
        // norm of t_i, softened against all-zero channels
        let norm_t = sqnorm.add_scalar(E::from_f64(1e-12))?.sqrt()?;
        let xi_row = self.xi.reshape(&[1, 1, c])?;
        // cos(t_i, xi_i * 1) = xi_i * sum(t_i) / (|xi_i| * sqrt(HW) * |t_i|)
        let num = xi_row.mul(&sums)?;
        let den = norm_t
            .mul(&xi_row.abs()?)?
            .mul_scalar(E::from_f64((hw as f64).sqrt()))?
            .add_scalar(E::from_f64(1e-30))?;
        let sim = num.div(&den)?.relu()?; // [B, 1, C]

        let selected = seq.mul(&sim)?; // broadcast over HW
        let mixed = selected
            .reshape(&[b * hw, c])?
            .matmul(&self.p)?
            .reshape(&[b, hw, c])?;
        let spatial = unflatten_spatial(&mixed, h, w)?;
        let refined = self.conv.forward(&spatial)?;
        Ok(refined.add(x)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        push_param(out, prefix, "xi", &self.xi);
        push_param(out, prefix, "p", &self.p);
        self.conv.collect_params(&format!("{}.conv", prefix), out);
    }

    pub fn param_count(&self) -> usize {
        self.channels + self.channels * self.channels + self.conv.weight.numel() + self.channels
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let c = self.channels as u64;
        let hw = (h * w) as u64;
        hw * c * c + self.conv.macs(h, w)
    }
}

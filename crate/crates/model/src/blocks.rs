//! Network building blocks above raw tensor ops.

use rand_chacha::ChaCha8Rng;
use samamba_tensor::init::kaiming_uniform;
use samamba_tensor::{concat, Element, Tensor};

use crate::{push_param, ModelError, ParamList, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Sigmoid,
    None,
}

impl Activation {
    pub fn apply<E: Element>(self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(match self {
            Activation::Relu => x.relu()?,
            Activation::Silu => x.silu()?,
            Activation::Sigmoid => x.sigmoid()?,
            Activation::None => x.reshape(&x.shape().to_vec())?,
        })
    }
}

/// Fully connected layer on the last axis.
pub struct Linear<E: Element> {
    pub weight: Tensor<E>, // [in, out]
    pub bias: Tensor<E>,   // [out]
}

impl<E: Element> Linear<E> {
    pub fn new(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = kaiming_uniform::<E>(rng, &[d_in, d_out], d_in);
        let bias = kaiming_uniform::<E>(rng, &[d_out], d_in);
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
        Linear { weight, bias }
    }

    /// x: [..., in] -> [..., out].
    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let d_in = self.weight.shape()[0];
        let d_out = self.weight.shape()[1];
        let rows = x.numel() / d_in;
        let flat = x.reshape(&[rows, d_in])?;
        let y = flat.matmul(&self.weight)?.add(&self.bias)?;
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = d_out;
        Ok(y.reshape(&out_shape)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        push_param(out, prefix, "weight", &self.weight);
        push_param(out, prefix, "bias", &self.bias);
    }

    pub fn macs(&self, rows: usize) -> u64 {
        rows as u64 * self.weight.shape()[0] as u64 * self.weight.shape()[1] as u64
    }
}

/// Two linear layers with an activation between; preserves the trailing
/// extent.
pub struct Mlp<E: Element> {
    pub fc1: Linear<E>,
    pub fc2: Linear<E>,
    pub act: Activation,
}

impl<E: Element> Mlp<E> {
    pub fn new(dim: usize, hidden_ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden = (dim * hidden_ratio).max(1);
        Mlp {
            fc1: Linear::new(dim, hidden, rng),
            fc2: Linear::new(hidden, dim, rng),
            act: Activation::Silu,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let h = self.act.apply(&self.fc1.forward(x)?)?;
        self.fc2.forward(&h)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        self.fc1.collect_params(&format!("{}.fc1", prefix), out);
        self.fc2.collect_params(&format!("{}.fc2", prefix), out);
    }

    pub fn macs(&self, rows: usize) -> u64 {
        self.fc1.macs(rows) + self.fc2.macs(rows)
    }
}

/// Layer normalization over the last axis with learnable affine.
pub struct LayerNorm<E: Element> {
    pub scale: Tensor<E>,
    pub shift: Tensor<E>,
    pub eps: f64,
}

impl<E: Element> LayerNorm<E> {
    pub fn new(dim: usize) -> Self {
        let scale = Tensor::ones(&[dim]);
        let shift = Tensor::zeros(&[dim]);
        scale.set_requires_grad(true);
        shift.set_requires_grad(true);
        LayerNorm {
            scale,
            shift,
            eps: LN_EPS,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(x.layer_norm(&self.scale, &self.shift, self.eps)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        push_param(out, prefix, "scale", &self.scale);
        push_param(out, prefix, "shift", &self.shift);
    }
}

/// Batch normalization over [B,C,H,W] with running statistics.
pub struct BatchNorm2d<E: Element> {
    pub scale: Tensor<E>,
    pub shift: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
}

impl<E: Element> BatchNorm2d<E> {
    pub fn new(channels: usize) -> Self {
        let scale = Tensor::ones(&[channels]);
        let shift = Tensor::zeros(&[channels]);
        scale.set_requires_grad(true);
        shift.set_requires_grad(true);
        BatchNorm2d {
            scale,
            shift,
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
        }
    }

    pub fn forward(&self, x: &Tensor<E>, training: bool) -> Result<Tensor<E>> {
        Ok(x.batch_norm(
            &self.scale,
            &self.shift,
            &self.running_mean,
            &self.running_var,
            BN_MOMENTUM,
            BN_EPS,
            training,
        )?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        push_param(out, prefix, "scale", &self.scale);
        push_param(out, prefix, "shift", &self.shift);
        // running statistics ride along in checkpoints but take no gradient
        push_param(out, prefix, "running_mean", &self.running_mean);
        push_param(out, prefix, "running_var", &self.running_var);
    }
}

/// Convolution with bias.
pub struct Conv2d<E: Element> {
    pub weight: Tensor<E>, // [out, in, k, k]
    pub bias: Tensor<E>,   // [out]
    pub stride: usize,
    pub pad: usize,
}

impl<E: Element> Conv2d<E> {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = kaiming_uniform::<E>(rng, &[c_out, c_in, kernel, kernel], fan_in);
        let bias = kaiming_uniform::<E>(rng, &[c_out], fan_in);
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
        Conv2d {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = x.conv2d(&self.weight, self.stride, self.pad)?;
        let c_out = self.weight.shape()[0];
        Ok(y.add(&self.bias.reshape(&[1, c_out, 1, 1])?)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        push_param(out, prefix, "weight", &self.weight);
        push_param(out, prefix, "bias", &self.bias);
    }

    pub fn out_extent(&self, h: usize) -> usize {
        (h + 2 * self.pad - self.weight.shape()[2]) / self.stride + 1
    }

    pub fn macs(&self, in_h: usize, in_w: usize) -> u64 {
        let [co, ci, kh, kw] = [
            self.weight.shape()[0] as u64,
            self.weight.shape()[1] as u64,
            self.weight.shape()[2] as u64,
            self.weight.shape()[3] as u64,
        ];
        let oh = self.out_extent(in_h) as u64;
        let ow = self.out_extent(in_w) as u64;
        co * ci * kh * kw * oh * ow
    }
}

/// Transposed convolution (integer upsampling head).
pub struct ConvTranspose2d<E: Element> {
    pub weight: Tensor<E>, // [in, out, k, k]
    pub bias: Tensor<E>,
    pub stride: usize,
}

impl<E: Element> ConvTranspose2d<E> {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = kaiming_uniform::<E>(rng, &[c_in, c_out, kernel, kernel], fan_in);
        let bias = kaiming_uniform::<E>(rng, &[c_out], fan_in);
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
        ConvTranspose2d {
            weight,
            bias,
            stride,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = x.conv_transpose2d(&self.weight, self.stride, 0)?;
        let c_out = self.weight.shape()[1];
        Ok(y.add(&self.bias.reshape(&[1, c_out, 1, 1])?)?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        push_param(out, prefix, "weight", &self.weight);
        push_param(out, prefix, "bias", &self.bias);
    }

    pub fn macs(&self, in_h: usize, in_w: usize) -> u64 {
        let [ci, co, kh, kw] = [
            self.weight.shape()[0] as u64,
            self.weight.shape()[1] as u64,
            self.weight.shape()[2] as u64,
            self.weight.shape()[3] as u64,
        ];
        in_h as u64 * in_w as u64 * ci * co * kh * kw
    }
}

/// conv -> batch norm -> activation, in that order.
pub struct ConvBlock<E: Element> {
    pub conv: Conv2d<E>,
    pub bn: BatchNorm2d<E>,
    pub act: Activation,
}

impl<E: Element> ConvBlock<E> {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(ModelError::Config(format!(
                "conv block kernel must be odd, got {}",
                kernel
            )));
        }
        Ok(ConvBlock {
            conv: Conv2d::new(c_in, c_out, kernel, 1, (kernel - 1) / 2, rng),
            bn: BatchNorm2d::new(c_out),
            act,
        })
    }

    pub fn forward(&self, x: &Tensor<E>, training: bool) -> Result<Tensor<E>> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y, training)?;
        self.act.apply(&y)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        self.conv.collect_params(&format!("{}.conv", prefix), out);
        self.bn.collect_params(&format!("{}.bn", prefix), out);
    }

    pub fn macs(&self, in_h: usize, in_w: usize) -> u64 {
        self.conv.macs(in_h, in_w)
    }
}

/// Channel attention gate: global average and max pooling through a shared
/// squeeze MLP, summed, sigmoid. Output shape [B,C,1,1], values in (0,1).
pub struct ChannelAttention<E: Element> {
    pub fc1: Linear<E>,
    pub fc2: Linear<E>,
    /// CBAM-style avg+max pooling; avg only when false.
    pub avg_max: bool,
}

impl<E: Element> ChannelAttention<E> {
    pub fn new(channels: usize, ratio: usize, avg_max: bool, rng: &mut ChaCha8Rng) -> Self {
        let squeezed = (channels / ratio).max(1);
        ChannelAttention {
            fc1: Linear::new(channels, squeezed, rng),
            fc2: Linear::new(squeezed, channels, rng),
            avg_max,
        }
    }

    pub fn gate(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, c) = (x.shape()[0], x.shape()[1]);
        let avg = x.mean_axis(3)?.mean_axis(2)?.reshape(&[b, c])?;
        let mut logits = self.fc2.forward(&self.fc1.forward(&avg)?.relu()?)?;
        if self.avg_max {
            let max = x.max_axis(3)?.max_axis(2)?.reshape(&[b, c])?;
            let max_logits = self.fc2.forward(&self.fc1.forward(&max)?.relu()?)?;
            logits = logits.add(&max_logits)?;
        }
        Ok(logits.sigmoid()?.reshape(&[b, c, 1, 1])?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        self.fc1.collect_params(&format!("{}.fc1", prefix), out);
        self.fc2.collect_params(&format!("{}.fc2", prefix), out);
    }

    pub fn macs(&self, batch: usize) -> u64 {
        let per_pool = self.fc1.macs(batch) + self.fc2.macs(batch);
        if self.avg_max {
            2 * per_pool
        } else {
            per_pool
        }
    }
}

/// Spatial attention gate: channelwise mean and max maps, concatenated,
/// convolved, sigmoid. Output shape [B,1,H,W].
pub struct SpatialAttention<E: Element> {
    pub conv: Conv2d<E>,
}

impl<E: Element> SpatialAttention<E> {
    pub fn new(kernel: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(ModelError::Config(format!(
                "spatial attention kernel must be odd, got {}",
                kernel
            )));
        }
        Ok(SpatialAttention {
            conv: Conv2d::new(2, 1, kernel, 1, (kernel - 1) / 2, rng),
        })
    }

    pub fn gate(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let mean = x.mean_axis(1)?;
        let max = x.max_axis(1)?;
        let pooled = concat(1, &[&mean, &max])?;
        Ok(self.conv.forward(&pooled)?.sigmoid()?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        self.conv.collect_params(&format!("{}.conv", prefix), out);
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.conv.macs(h, w)
    }
}

/// [B,C,H,W] -> [B, H*W, C] row-major raster-scan sequence.
pub fn flatten_spatial<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    Ok(x.permute(&[0, 2, 3, 1])?.reshape(&[b, h * w, c])?)
}

/// [B, H*W, C] -> [B,C,H,W].
pub fn unflatten_spatial<E: Element>(x: &Tensor<E>, h: usize, w: usize) -> Result<Tensor<E>> {
    let (b, c) = (x.shape()[0], x.shape()[2]);
    Ok(x.reshape(&[b, h, w, c])?.permute(&[0, 3, 1, 2])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use samamba_tensor::init::{seeded_rng, uniform_tensor};

    #[test]
    fn mlp_zero_weights_zero_output() {
        let mut rng = seeded_rng(41, 0);
        let mlp = Mlp::<f64>::new(4, 2, &mut rng);
        for t in [&mlp.fc1.weight, &mlp.fc1.bias, &mlp.fc2.weight, &mlp.fc2.bias] {
            t.update_data(|d| d.fill(0.0));
        }
        let x = uniform_tensor::<f64>(&mut rng, &[3, 4], -1.0, 1.0);
        assert!(mlp.forward(&x).unwrap().to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_identity_degenerate_config() {
        // hidden = dim, fc1 = I with silu bypassed via large positive shift?
        // simpler: fc1 = I, fc2 = I, activation None
        let mut rng = seeded_rng(42, 0);
        let mut mlp = Mlp::<f64>::new(3, 1, &mut rng);
        mlp.act = Activation::None;
        let eye = |t: &Tensor<f64>, n: usize| {
            t.update_data(|d| {
                d.fill(0.0);
                for i in 0..n {
                    d[i * n + i] = 1.0;
                }
            })
        };
        eye(&mlp.fc1.weight, 3);
        eye(&mlp.fc2.weight, 3);
        mlp.fc1.bias.update_data(|d| d.fill(0.0));
        mlp.fc2.bias.update_data(|d| d.fill(0.0));
        let x = uniform_tensor::<f64>(&mut rng, &[2, 3], -1.0, 1.0);
        let y = mlp.forward(&x).unwrap();
        for (a, b) in x.to_vec().iter().zip(y.to_vec()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mlp_gradient_check() {
        let mut rng = seeded_rng(43, 0);
        let mlp = Mlp::<f64>::new(4, 2, &mut rng);
        let x0 = uniform_tensor::<f64>(&mut rng, &[3, 4], -1.0, 1.0);
        let report = samamba_tensor::finite_diff_check(
            |x| mlp.forward(x)?.pow_scalar(2.0)?.sum_all(),
            &x0,
            1e-5,
            1e-6,
        )
        .unwrap();
        report.ensure("mlp", 1e-6).unwrap();
    }

    #[test]
    fn channel_attention_properties() {
        let mut rng = seeded_rng(44, 0);
        let attn = ChannelAttention::<f64>::new(6, 4, true, &mut rng);
        // constant channels and a symmetric (constant-weight) init give
        // equal gates across channels
        for t in [&attn.fc1.weight, &attn.fc2.weight] {
            t.update_data(|d| d.fill(0.11));
        }
        for t in [&attn.fc1.bias, &attn.fc2.bias] {
            t.update_data(|d| d.fill(0.02));
        }
        let x = Tensor::<f64>::full(&[2, 6, 4, 4], 0.37);
        let gate = attn.gate(&x).unwrap();
        assert_eq!(gate.shape(), &[2, 6, 1, 1]);
        let g = gate.to_vec();
        for v in &g {
            assert!(*v > 0.0 && *v < 1.0);
            assert!((v - g[0]).abs() < 1e-12);
        }
        let mut rng = seeded_rng(44, 1);
        let attn = ChannelAttention::<f64>::new(6, 4, true, &mut rng);

        // gate values match a hand-rolled pooling + mlp recomputation
        let x = uniform_tensor::<f64>(&mut rng, &[1, 6, 3, 3], -1.0, 1.0);
        let gate = attn.gate(&x).unwrap().to_vec();
        let xd = x.to_vec();
        let w1 = attn.fc1.weight.to_vec();
        let b1 = attn.fc1.bias.to_vec();
        let w2 = attn.fc2.weight.to_vec();
        let b2 = attn.fc2.bias.to_vec();
        let mlp = |input: &[f64]| -> Vec<f64> {
            let hid: Vec<f64> = (0..1)
                .map(|_| 0)
                .flat_map(|_| {
                    (0..b1.len()).map(|j| {
                        let v: f64 =
                            (0..6).map(|i| input[i] * w1[i * b1.len() + j]).sum::<f64>() + b1[j];
                        v.max(0.0)
                    })
                })
                .collect();
            (0..6)
                .map(|j| (0..b1.len()).map(|i| hid[i] * w2[i * 6 + j]).sum::<f64>() + b2[j])
                .collect()
        };
        let avg: Vec<f64> = (0..6)
            .map(|c| xd[c * 9..(c + 1) * 9].iter().sum::<f64>() / 9.0)
            .collect();
        let max: Vec<f64> = (0..6)
            .map(|c| xd[c * 9..(c + 1) * 9].iter().cloned().fold(f64::MIN, f64::max))
            .collect();
        let la = mlp(&avg);
        let lm = mlp(&max);
        for c in 0..6 {
            let want = 1.0 / (1.0 + (-(la[c] + lm[c])).exp());
            assert!((gate[c] - want).abs() < 1e-12, "{} vs {}", gate[c], want);
        }
    }

    #[test]
    fn gate_application_is_not_idempotent() {
        let mut rng = seeded_rng(45, 0);
        let attn = ChannelAttention::<f64>::new(4, 2, true, &mut rng);
        let x = uniform_tensor::<f64>(&mut rng, &[1, 4, 3, 3], 0.1, 1.0);
        let once = x.mul(&attn.gate(&x).unwrap()).unwrap();
        let twice = once.mul(&attn.gate(&once).unwrap()).unwrap();
        assert_ne!(once.to_vec(), twice.to_vec());
    }

    #[test]
    fn spatial_attention_shape_and_constancy() {
        let mut rng = seeded_rng(46, 0);
        let attn = SpatialAttention::<f64>::new(7, &mut rng).unwrap();
        for c in [3usize, 8] {
            let x = Tensor::<f64>::full(&[2, c, 8, 8], 1.3);
            let gate = attn.gate(&x).unwrap();
            assert_eq!(gate.shape(), &[2, 1, 8, 8]);
            let g = gate.to_vec();
            // constant input -> spatially constant gate wherever the 7x7
            // kernel sees no zero padding (margin 3)
            let interior: Vec<f64> = (3..5)
                .flat_map(|y| (3..5).map(move |x| (y, x)))
                .map(|(y, x)| g[y * 8 + x])
                .collect();
            for v in &interior {
                assert!((v - interior[0]).abs() < 1e-12);
                assert!(*v > 0.0 && *v < 1.0);
            }
        }
    }

    #[test]
    fn spatial_attention_matches_direct_oracle() {
        let mut rng = seeded_rng(47, 0);
        let attn = SpatialAttention::<f64>::new(3, &mut rng).unwrap();
        let x = uniform_tensor::<f64>(&mut rng, &[1, 5, 4, 4], -1.0, 1.0);
        let gate = attn.gate(&x).unwrap().to_vec();
        let xd = x.to_vec();
        let w = attn.conv.weight.to_vec();
        let b = attn.conv.bias.to_vec()[0];
        for oy in 0..4usize {
            for ox in 0..4usize {
                let mut acc = b;
                for (pool_idx, pool) in [0usize, 1].iter().enumerate() {
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let iy = oy as isize + ky as isize - 1;
                            let ix = ox as isize + kx as isize - 1;
                            if iy < 0 || iy >= 4 || ix < 0 || ix >= 4 {
                                continue;
                            }
                            let (iy, ix) = (iy as usize, ix as usize);
                            let vals: Vec<f64> =
                                (0..5).map(|c| xd[(c * 4 + iy) * 4 + ix]).collect();
                            let pooled = if *pool == 0 {
                                vals.iter().sum::<f64>() / 5.0
                            } else {
                                vals.iter().cloned().fold(f64::MIN, f64::max)
                            };
                            acc += pooled * w[(pool_idx * 3 + ky) * 3 + kx];
                        }
                    }
                }
                let want = 1.0 / (1.0 + (-acc).exp());
                assert!((gate[oy * 4 + ox] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gates_never_increase_magnitude() {
        let mut rng = seeded_rng(48, 0);
        let ca = ChannelAttention::<f64>::new(4, 2, true, &mut rng);
        let sa = SpatialAttention::<f64>::new(7, &mut rng).unwrap();
        let x = uniform_tensor::<f64>(&mut rng, &[2, 4, 8, 8], -2.0, 2.0);
        let gated = x
            .mul(&ca.gate(&x).unwrap())
            .unwrap()
            .mul(&sa.gate(&x).unwrap())
            .unwrap();
        for (g, o) in gated.to_vec().iter().zip(x.to_vec()) {
            assert!(g.abs() <= o.abs() + 1e-15);
        }
    }

    #[test]
    fn conv_block_contract() {
        let mut rng = seeded_rng(49, 0);
        let block = ConvBlock::<f64>::new(3, 5, 3, Activation::Silu, &mut rng).unwrap();
        // shape preservation at stride 1 / same padding
        let x = uniform_tensor::<f64>(&mut rng, &[2, 3, 7, 9], -1.0, 1.0);
        let y = block.forward(&x, true).unwrap();
        assert_eq!(y.shape(), &[2, 5, 7, 9]);

        // zero input, zero shift: BN keeps zeros, SiLU(0) = 0
        let block = ConvBlock::<f64>::new(2, 2, 3, Activation::Silu, &mut rng).unwrap();
        block.conv.weight.update_data(|d| d.fill(0.0));
        block.conv.bias.update_data(|d| d.fill(0.0));
        let zeros = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let y = block.forward(&zeros, true).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_block_gradient_check() {
        let mut rng = seeded_rng(50, 0);
        let block = ConvBlock::<f64>::new(2, 3, 3, Activation::Silu, &mut rng).unwrap();
        let x0 = uniform_tensor::<f64>(&mut rng, &[2, 2, 4, 4], -1.0, 1.0);
        let report = samamba_tensor::finite_diff_check(
            |x| block.forward(x, true)?.pow_scalar(2.0)?.sum_all(),
            &x0,
            1e-5,
            1e-5,
        )
        .unwrap();
        report.ensure("conv_block", 1e-5).unwrap();
    }

    #[test]
    fn flatten_unflatten_roundtrip() {
        let mut rng = seeded_rng(51, 0);
        let x = uniform_tensor::<f64>(&mut rng, &[2, 3, 4, 5], -1.0, 1.0);
        let seq = flatten_spatial(&x).unwrap();
        assert_eq!(seq.shape(), &[2, 20, 3]);
        let back = unflatten_spatial(&seq, 4, 5).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
    }
}

//! Hierarchical 4-stage encoder producing feature maps at strides 4/8/16/32
//! with the widths given by the config. Each stage is a strided downsampling
//! conv, a feature-selection adapter, and residual conv blocks. Trained from
//! scratch; the `freeze_backbone` flag emulates a frozen pretrained backbone
//! (adapters stay trainable).

use rand_chacha::ChaCha8Rng;
use samamba_tensor::{Element, Tensor};

use crate::adapter::FsAdapter;
use crate::blocks::{BatchNorm2d, Conv2d};
use crate::config::ModelConfig;
use crate::{ModelError, ParamList, Result};

pub struct ResBlock<E: Element> {
    conv1: Conv2d<E>,
    bn1: BatchNorm2d<E>,
    conv2: Conv2d<E>,
    bn2: BatchNorm2d<E>,
}

impl<E: Element> ResBlock<E> {
    fn new(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock {
            conv1: Conv2d::new(channels, channels, 3, 1, 1, rng),
            bn1: BatchNorm2d::new(channels),
            conv2: Conv2d::new(channels, channels, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(channels),
        }
    }

    fn forward(&self, x: &Tensor<E>, training: bool) -> Result<Tensor<E>> {
        let y = self.bn1.forward(&self.conv1.forward(x)?, training)?.silu()?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?, training)?;
        Ok(y.add(x)?.silu()?)
    }

    fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        self.conv1.collect_params(&format!("{}.conv1", prefix), out);
        self.bn1.collect_params(&format!("{}.bn1", prefix), out);
        self.conv2.collect_params(&format!("{}.conv2", prefix), out);
        self.bn2.collect_params(&format!("{}.bn2", prefix), out);
    }

    fn macs(&self, h: usize, w: usize) -> u64 {
        self.conv1.macs(h, w) + self.conv2.macs(h, w)
    }
}

struct Stage<E: Element> {
    down: Conv2d<E>,
    down_bn: BatchNorm2d<E>,
    adapter: FsAdapter<E>,
    blocks: Vec<ResBlock<E>>,
}

pub struct Encoder<E: Element> {
    stages: Vec<Stage<E>>,
    pub widths: [usize; 4],
}

/// The four per-stage feature maps, shallow (stride 4) to deep (stride 32).
pub type FeaturePyramid<E> = Vec<Tensor<E>>;

impl<E: Element> Encoder<E> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let widths = cfg.stage_widths;
        let mut stages = Vec::with_capacity(4);
        for i in 0..4 {
            let c_in = if i == 0 { 3 } else { widths[i - 1] };
            let c_out = widths[i];
            // stage 1 embeds patches at stride 4; later stages halve
            let down = if i == 0 {
                Conv2d::new(c_in, c_out, 7, 4, 3, rng)
            } else {
                Conv2d::new(c_in, c_out, 3, 2, 1, rng)
            };
            let blocks = (0..cfg.blocks_per_stage)
                .map(|_| ResBlock::new(c_out, rng))
                .collect();
            stages.push(Stage {
                down,
                down_bn: BatchNorm2d::new(c_out),
                adapter: FsAdapter::new(c_out, rng),
                blocks,
            });
        }
        let encoder = Encoder { stages, widths };
        if cfg.freeze_backbone {
            encoder.set_backbone_trainable(false);
        }
        Ok(encoder)
    }

    /// Marks backbone weights (downsampling convs, norms, residual blocks)
    /// trainable or frozen. Adapters are never touched.
    pub fn set_backbone_trainable(&self, trainable: bool) {
        let mut params = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            let prefix = format!("stage{}", i + 1);
            stage.down.collect_params(&format!("{}.down", prefix), &mut params);
            stage
                .down_bn
                .collect_params(&format!("{}.down_bn", prefix), &mut params);
            for (j, block) in stage.blocks.iter().enumerate() {
                block.collect_params(&format!("{}.block{}", prefix, j), &mut params);
            }
        }
        for (name, t) in params {
            if name.contains("running_") {
                continue;
            }
            t.set_requires_grad(trainable);
        }
    }

    /// image: [B,3,H,W] with H, W divisible by 32 -> four maps, stage i at
    /// extents (H / 2^(i+1), W / 2^(i+1)) with the configured width.
    pub fn forward(&self, image: &Tensor<E>, training: bool) -> Result<FeaturePyramid<E>> {
        if image.rank() != 4 || image.shape()[1] != 3 {
            return Err(ModelError::Domain {
                op: "encode",
                msg: format!("expected [B,3,H,W] input, got {:?}", image.shape()),
            });
        }
        let (h, w) = (image.shape()[2], image.shape()[3]);
        if h % 32 != 0 || w % 32 != 0 {
            return Err(ModelError::Domain {
                op: "encode",
                msg: format!("input extents {}x{} must be divisible by 32", h, w),
            });
        }
        let mut x = image.reshape(&image.shape().to_vec())?;
        let mut pyramid = Vec::with_capacity(4);
        for stage in &self.stages {
            x = stage
                .down_bn
                .forward(&stage.down.forward(&x)?, training)?
                .silu()?;
            x = stage.adapter.forward(&x)?;
            for block in &stage.blocks {
                x = block.forward(&x, training)?;
            }
            pyramid.push(x.clone());
        }
        Ok(pyramid)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut ParamList<E>) {
        for (i, stage) in self.stages.iter().enumerate() {
            let sp = format!("{}.stage{}", prefix, i + 1);
            stage.down.collect_params(&format!("{}.down", sp), out);
            stage.down_bn.collect_params(&format!("{}.down_bn", sp), out);
            stage
                .adapter
                .collect_params(&format!("{}.adapter", sp), out);
            for (j, block) in stage.blocks.iter().enumerate() {
                block.collect_params(&format!("{}.block{}", sp, j), out);
            }
        }
    }

    /// Multiply-accumulates for one image of the given extents.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mut total = 0u64;
        let (mut sh, mut sw) = (h, w);
        for (i, stage) in self.stages.iter().enumerate() {
            total += stage.down.macs(sh, sw);
            let div = if i == 0 { 4 } else { 2 };
            sh /= div;
            sw /= div;
            total += stage.adapter.macs(sh, sw);
            for block in &stage.blocks {
                total += block.macs(sh, sw);
            }
        }
        total
    }
}

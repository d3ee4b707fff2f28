//! Architecture hyperparameters and their plain-text key/value file format.
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are
//! comma-separated. Unknown keys are rejected so that config drift is loud.

use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    /// Gated per-segment blend (the DPCF mechanism).
    Adaptive,
    /// Elementwise addition followed by the refinement conv.
    Add,
    /// Channel concatenation followed by the refinement conv.
    Concat,
}

impl FusionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionKind::Adaptive => "adaptive",
            FusionKind::Add => "add",
            FusionKind::Concat => "concat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(FusionKind::Adaptive),
            "add" => Ok(FusionKind::Add),
            "concat" => Ok(FusionKind::Concat),
            other => Err(ModelError::Config(format!(
                "unknown fusion strategy '{}' (expected adaptive|add|concat)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Encoder stage widths (4 stages at strides 4, 8, 16, 32).
    pub stage_widths: [usize; 4],
    /// Residual blocks per encoder stage.
    pub blocks_per_stage: usize,
    /// Aligned channel width inside CSI (and of the decoder path).
    pub csi_width: usize,
    /// Parallel state-space heads per CSI module.
    pub csi_heads: usize,
    /// Channel segments in the decoder fusion gate.
    pub dpcf_segments: usize,
    /// SSM state dimension N.
    pub state_dim: usize,
    /// MLP expansion inside the sequence block.
    pub mlp_ratio: usize,
    /// Channel-attention squeeze ratio.
    pub attn_ratio: usize,
    /// Spatial-attention kernel extent.
    pub spatial_kernel: usize,
    /// Mid-width of the segmentation head.
    pub head_width: usize,
    /// Decoder fusion strategy.
    pub fusion: FusionKind,
    /// Keep the CSI modules on the skip paths (plain 1x1 skips when false).
    pub use_csi: bool,
    /// Freeze encoder backbone weights (adapters stay trainable).
    pub freeze_backbone: bool,
    /// Exact zero-order-hold discretization instead of the simplified form.
    pub exact_zoh: bool,
    /// Bidirectional sequence scanning in CSI heads.
    pub bidirectional: bool,
    /// CBAM-style avg+max pooling in attention (avg only when false).
    pub avg_max_pool: bool,
    /// Additive sinusoidal position information on CSI sequences.
    pub pos_embed: bool,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stage_widths: [16, 32, 64, 128],
            blocks_per_stage: 1,
            csi_width: 32,
            csi_heads: 4,
            dpcf_segments: 4,
            state_dim: 16,
            mlp_ratio: 2,
            attn_ratio: 4,
            spatial_kernel: 7,
            head_width: 8,
            fusion: FusionKind::Adaptive,
            use_csi: true,
            freeze_backbone: false,
            exact_zoh: false,
            bidirectional: true,
            avg_max_pool: true,
            pos_embed: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-scale variant: hierarchical widths {96,192,384,768}, CSI width 128.
    pub fn paper_scale() -> Self {
        ModelConfig {
            stage_widths: [96, 192, 384, 768],
            csi_width: 128,
            head_width: 32,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.csi_width % self.csi_heads != 0 {
            return Err(ModelError::Config(format!(
                "csi_width {} not divisible by csi_heads {}",
                self.csi_width, self.csi_heads
            )));
        }
        if self.csi_width % self.dpcf_segments != 0 {
            return Err(ModelError::Config(format!(
                "csi_width {} not divisible by dpcf_segments {}",
                self.csi_width, self.dpcf_segments
            )));
        }
        if self.spatial_kernel % 2 == 0 {
            return Err(ModelError::Config(
                "spatial_kernel must be odd".to_string(),
            ));
        }
        if self.stage_widths.iter().any(|&w| w == 0)
            || self.csi_width == 0
            || self.state_dim == 0
            || self.head_width == 0
        {
            return Err(ModelError::Config("widths must be positive".to_string()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let w = self.stage_widths;
        format!(
            "stage_widths = {},{},{},{}\n\
             blocks_per_stage = {}\n\
             csi_width = {}\n\
             csi_heads = {}\n\
             dpcf_segments = {}\n\
             state_dim = {}\n\
             mlp_ratio = {}\n\
             attn_ratio = {}\n\
             spatial_kernel = {}\n\
             head_width = {}\n\
             fusion = {}\n\
             use_csi = {}\n\
             freeze_backbone = {}\n\
             exact_zoh = {}\n\
             bidirectional = {}\n\
             avg_max_pool = {}\n\
             pos_embed = {}\n\
             seed = {}\n",
            w[0],
            w[1],
            w[2],
            w[3],
            self.blocks_per_stage,
            self.csi_width,
            self.csi_heads,
            self.dpcf_segments,
            self.state_dim,
            self.mlp_ratio,
            self.attn_ratio,
            self.spatial_kernel,
            self.head_width,
            self.fusion.as_str(),
            self.use_csi,
            self.freeze_backbone,
            self.exact_zoh,
            self.bidirectional,
            self.avg_max_pool,
            self.pos_embed,
            self.seed,
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ModelError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                ModelError::Config(format!("line {}: bad {} '{}'", lineno + 1, what, value))
            };
            match key {
                "stage_widths" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| p.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("stage_widths"))?;
                    if parts.len() != 4 {
                        return Err(ModelError::Config(format!(
                            "line {}: stage_widths needs exactly 4 entries",
                            lineno + 1
                        )));
                    }
                    cfg.stage_widths = [parts[0], parts[1], parts[2], parts[3]];
                }
                "blocks_per_stage" => cfg.blocks_per_stage = value.parse().map_err(|_| bad("integer"))?,
                "csi_width" => cfg.csi_width = value.parse().map_err(|_| bad("integer"))?,
                "csi_heads" => cfg.csi_heads = value.parse().map_err(|_| bad("integer"))?,
                "dpcf_segments" => cfg.dpcf_segments = value.parse().map_err(|_| bad("integer"))?,
                "state_dim" => cfg.state_dim = value.parse().map_err(|_| bad("integer"))?,
                "mlp_ratio" => cfg.mlp_ratio = value.parse().map_err(|_| bad("integer"))?,
                "attn_ratio" => cfg.attn_ratio = value.parse().map_err(|_| bad("integer"))?,
                "spatial_kernel" => cfg.spatial_kernel = value.parse().map_err(|_| bad("integer"))?,
                "head_width" => cfg.head_width = value.parse().map_err(|_| bad("integer"))?,
                "fusion" => cfg.fusion = FusionKind::parse(value)?,
                "use_csi" => cfg.use_csi = value.parse().map_err(|_| bad("bool"))?,
                "freeze_backbone" => cfg.freeze_backbone = value.parse().map_err(|_| bad("bool"))?,
                "exact_zoh" => cfg.exact_zoh = value.parse().map_err(|_| bad("bool"))?,
                "bidirectional" => cfg.bidirectional = value.parse().map_err(|_| bad("bool"))?,
                "avg_max_pool" => cfg.avg_max_pool = value.parse().map_err(|_| bad("bool"))?,
                "pos_embed" => cfg.pos_embed = value.parse().map_err(|_| bad("bool"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                other => {
                    return Err(ModelError::Config(format!(
                        "line {}: unknown key '{}'",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

//! Model hyperparameters with the published preset and small presets sized
//! for single-core training runs.

use serde::{Deserialize, Serialize};

use crate::numerics::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frame_h: usize,
    pub frame_w: usize,
    /// Side length of the square observation patches.
    pub patch: usize,
    pub t_ctx: usize,
    pub action_count: usize,
    /// Depth of both stacks: spatial layer l feeds temporal layer l.
    pub layers: usize,
    pub spatial_embed: usize,
    pub spatial_heads: usize,
    pub temporal_embed: usize,
    pub temporal_heads: usize,
    /// MLP hidden width as a multiple of the block embed dim.
    pub mlp_ratio: usize,
    pub dropout: Real,
    /// Spatial / temporal keep targets in (0, 1].
    pub keep_spatial: Real,
    pub keep_temporal: Real,
    /// Gumbel-sigmoid temperature.
    pub tau: Real,
    /// Exempt the pure-state (h) tokens from temporal masking.
    pub exempt_state_tokens: bool,
    /// Return-to-go values are divided by this before embedding.
    pub rtg_scale: Real,
    /// Channels of the two-layer pure-state conv encoder.
    pub conv_c1: usize,
    pub conv_c2: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Observation normalization carried with the checkpoint so evaluation
    /// does not need the training dataset.
    pub obs_mean: Real,
    pub obs_std: Real,
}

impl ModelConfig {
    /// Published configuration: 84x84 gray frames, patch 7, six layers,
    /// 192/8 spatial and 64/4 temporal embedding/heads, 75% keep targets.
    pub fn paper() -> Self {
        ModelConfig {
            frame_h: 84,
            frame_w: 84,
            patch: 7,
            t_ctx: 10,
            action_count: 4,
            layers: 6,
            spatial_embed: 192,
            spatial_heads: 8,
            temporal_embed: 64,
            temporal_heads: 4,
            mlp_ratio: 4,
            dropout: 0.1,
            keep_spatial: 0.75,
            keep_temporal: 0.75,
            tau: 1.0,
            exempt_state_tokens: false,
            rtg_scale: 1.0,
            conv_c1: 8,
            conv_c2: 16,
            conv_kernel: 3,
            conv_stride: 2,
            obs_mean: 0.0,
            obs_std: 1.0,
        }
    }

    /// Sized for the 24x32 key-door frames: 12 patch tokens per step, two
    /// layers, 32-wide embeddings.
    pub fn keydoor_desk() -> Self {
        ModelConfig {
            frame_h: 24,
            frame_w: 32,
            patch: 8,
            t_ctx: 10,
            action_count: 4,
            layers: 2,
            spatial_embed: 32,
            spatial_heads: 2,
            temporal_embed: 32,
            temporal_heads: 2,
            mlp_ratio: 4,
            dropout: 0.0,
            keep_spatial: 0.75,
            keep_temporal: 0.75,
            tau: 1.0,
            exempt_state_tokens: false,
            rtg_scale: 1.0,
            conv_c1: 8,
            conv_c2: 16,
            conv_kernel: 3,
            conv_stride: 2,
            obs_mean: 0.0,
            obs_std: 1.0,
        }
    }

    /// Latent-environment frames are a single patch; useful for fast wiring
    /// tests and the identification pipeline.
    pub fn latent_desk(frame_side: usize, action_count: usize) -> Self {
        ModelConfig {
            frame_h: frame_side,
            frame_w: frame_side,
            patch: frame_side,
            t_ctx: 8,
            action_count,
            layers: 2,
            spatial_embed: 32,
            spatial_heads: 2,
            temporal_embed: 32,
            temporal_heads: 2,
            mlp_ratio: 4,
            dropout: 0.0,
            keep_spatial: 0.75,
            keep_temporal: 0.75,
            tau: 1.0,
            exempt_state_tokens: false,
            rtg_scale: 1.0,
            conv_c1: 4,
            conv_c2: 8,
            conv_kernel: 3,
            conv_stride: 2,
            obs_mean: 0.0,
            obs_std: 1.0,
        }
    }

    pub fn patches_per_frame(&self) -> usize {
        (self.frame_h / self.patch) * (self.frame_w / self.patch)
    }

    /// Patch tokens plus the action and return-to-go tokens.
    pub fn spatial_tokens(&self) -> usize {
        self.patches_per_frame() + 2
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch
    }

    /// Reserved previous-action embedding row for the episode start.
    pub fn start_token_id(&self) -> usize {
        self.action_count
    }

    /// Output extents of the two-layer conv encoder.
    pub fn conv_dims(&self) -> Result<(usize, usize, usize)> {
        let step = |x: usize| -> Result<usize> {
            if self.conv_kernel > x {
                return Err(Error::dim(
                    "conv_state_embed",
                    format!("kernel {} larger than input extent {x}", self.conv_kernel),
                ));
            }
            Ok((x - self.conv_kernel) / self.conv_stride + 1)
        };
        let (h1, w1) = (step(self.frame_h)?, step(self.frame_w)?);
        let (h2, w2) = (step(h1)?, step(w1)?);
        Ok((self.conv_c2, h2, w2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_h == 0 || self.frame_w == 0 || self.patch == 0 {
            return Err(Error::Parameter("frame extents and patch must be positive".into()));
        }
        if self.frame_h % self.patch != 0 || self.frame_w % self.patch != 0 {
            return Err(Error::Parameter(format!(
                "frame {}x{} not divisible by patch {}",
                self.frame_h, self.frame_w, self.patch
            )));
        }
        if self.t_ctx == 0 || self.layers == 0 {
            return Err(Error::Parameter("t_ctx and layers must be positive".into()));
        }
        if self.action_count < 2 {
            return Err(Error::Parameter("need at least two actions".into()));
        }
        for (name, embed, heads) in [
            ("spatial", self.spatial_embed, self.spatial_heads),
            ("temporal", self.temporal_embed, self.temporal_heads),
        ] {
            if embed == 0 || heads == 0 || embed % heads != 0 {
                return Err(Error::Parameter(format!(
                    "{name} embed {embed} not divisible by {heads} heads"
                )));
            }
        }
        if self.mlp_ratio == 0 {
            return Err(Error::Parameter("mlp_ratio must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        for (name, k) in [("keep_spatial", self.keep_spatial), ("keep_temporal", self.keep_temporal)]
        {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::Parameter(format!("{name} {k} outside (0, 1]")));
            }
        }
        if self.tau <= 0.0 {
            return Err(Error::Parameter(format!("gumbel temperature {} must be positive", self.tau)));
        }
        if self.rtg_scale <= 0.0 {
            return Err(Error::Parameter("rtg_scale must be positive".into()));
        }
        if self.conv_c1 == 0 || self.conv_c2 == 0 || self.conv_stride == 0 {
            return Err(Error::Parameter("conv channels and stride must be positive".into()));
        }
        if self.obs_std <= 0.0 {
            return Err(Error::Parameter("obs_std must be positive".into()));
        }
        self.conv_dims()?;
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DOA_CLASSES: usize = 37;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_window: usize,
    pub encoder_stride: usize,
    pub basis_size: usize,
    pub tcn_blocks: usize,
    pub tcn_channels: usize,
    pub kernel: usize,
    pub num_speakers: usize,
    pub enhancement_stage: bool,
    pub doa_head: bool,
    pub doa_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_window: 16,
            encoder_stride: 8,
            basis_size: 64,
            tcn_blocks: 2,
            tcn_channels: 32,
            kernel: 3,
            num_speakers: 2,
            enhancement_stage: true,
            doa_head: true,
            doa_classes: DOA_CLASSES,
        }
    }
}

impl ModelConfig {
    /// A few thousand parameters; small enough for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            basis_size: 8,
            tcn_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::Config(format!("{field}: {reason}")));
        if self.encoder_window == 0 || self.encoder_window % 2 != 0 {
            return bad("encoder_window", format!("{} must be even and positive", self.encoder_window));
        }
        if self.encoder_stride == 0 || self.encoder_stride > self.encoder_window {
            return bad("encoder_stride", format!("{} must be in 1..={}", self.encoder_stride, self.encoder_window));
        }
        if self.basis_size == 0 || self.tcn_channels == 0 {
            return bad("basis_size", "basis and channel counts must be positive".into());
        }
        if self.kernel != 3 {
            return bad("kernel", format!("only kernel 3 is implemented, got {}", self.kernel));
        }
        if self.num_speakers != 2 {
            return bad("num_speakers", format!("only two speakers are supported, got {}", self.num_speakers));
        }
        if self.doa_classes != DOA_CLASSES {
            return bad("doa_classes", format!("must be {DOA_CLASSES}, got {}", self.doa_classes));
        }
        Ok(())
    }

    /// Encoder frames of a `t`-sample input.
    pub fn frames(&self, t: usize) -> Result<usize> {
        if t < self.encoder_window {
            return Err(Error::Core(binscene_core::Error::invalid(format!(
                "input of {t} samples is shorter than the {}-sample encoder window",
                self.encoder_window
            ))));
        }
        Ok((t - self.encoder_window) / self.encoder_stride + 1)
    }

    /// Spatial feature values per frame: cos and sin of the IPD plus the ILD
    /// for every bin.
    pub fn feature_dim(&self) -> usize {
        3 * (self.encoder_window / 2 + 1)
    }
}

/// Learning-rate schedule and loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: f64,
    /// Epochs between decays.
    pub decay_every: usize,
    /// Stops after this many optimizer steps when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Epochs of DoA-head training after the separator, with the separator
    /// frozen. Ignored without a DoA head.
    pub doa_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            learning_rate: 1e-3,
            decay: 0.98,
            decay_every: 2,
            max_steps: None,
            seed: 0,
            doa_epochs: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for continuing from a checkpoint: slower decay.
    pub fn finetune() -> Self {
        Self {
            decay_every: 5,
            ..Self::default()
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay.powi((epoch / self.decay_every.max(1)) as i32)
    }
}

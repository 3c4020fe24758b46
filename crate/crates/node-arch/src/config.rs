//! Network and training configuration.
//!
//! Channel widths follow one ladder for every network: downsampling stage
//! `k` (counting shuffle stages first, then pool stages) outputs
//! `base_channels << k` channels, and the decoder walks the same ladder in
//! reverse, halving back to the width of each recorded skip connection.

use serde::{Deserialize, Serialize};

use crate::NodeArchError;

/// Negative slope shared by every leaky ReLU in the toolkit.
pub const NEGATIVE_SLOPE: f64 = 0.2;

/// Channel count of a packed raw image; every network emits this many.
pub const PACKED_CHANNELS: usize = 4;

/// Shape of a noise-estimation sub-network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubnetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    /// Full-resolution conv+leaky-ReLU layers before any downsampling.
    pub head_conv_count: usize,
    /// 1x1 channel-halving conv between the head and the first shuffle.
    pub bottleneck: bool,
    /// Space-to-depth downsampling stages; at least one.
    pub shuffle_stages: usize,
    /// Max-pool downsampling stages below the shuffle stages.
    pub pool_stages: usize,
    pub kernel_size: usize,
}

impl Default for SubnetConfig {
    /// Toy scale: small enough to finite-difference and to train in tests.
    fn default() -> Self {
        SubnetConfig {
            in_channels: PACKED_CHANNELS,
            base_channels: 8,
            head_conv_count: 2,
            bottleneck: true,
            shuffle_stages: 1,
            pool_stages: 1,
            kernel_size: 3,
        }
    }
}

impl SubnetConfig {
    /// Full-scale preset for real captures. The original channel widths were
    /// never published; this ladder (base 32, three pool stages) is a
    /// plausible reconstruction, not a pinned reference.
    pub fn full_scale() -> Self {
        SubnetConfig {
            base_channels: 32,
            pool_stages: 3,
            ..SubnetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NodeArchError> {
        let fail = |detail: String| Err(NodeArchError::Config { detail });
        if self.in_channels == 0 || self.base_channels == 0 {
            return fail("channel counts must be nonzero".into());
        }
        if self.bottleneck && self.base_channels % 2 != 0 {
            return fail(format!(
                "bottleneck halves base_channels, so {} must be even",
                self.base_channels
            ));
        }
        if self.shuffle_stages == 0 {
            return fail("sub-networks need at least one shuffle stage".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return fail(format!(
                "kernel_size {} must be odd so same-padding is symmetric",
                self.kernel_size
            ));
        }
        Ok(())
    }

    /// Spatial dims of inputs must be divisible by this.
    pub fn downsample_factor(&self) -> usize {
        1 << (self.shuffle_stages + self.pool_stages)
    }
}

/// Shape of the final denoiser: no head convs, no bottleneck, and exactly one
/// shuffle/deshuffle pair at the highest resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    /// Always 12: noisy 4 + GP estimate 4 + defect estimate 4.
    pub in_channels: usize,
    pub base_channels: usize,
    pub pool_stages: usize,
    pub kernel_size: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            in_channels: 3 * PACKED_CHANNELS,
            base_channels: 8,
            pool_stages: 1,
            kernel_size: 3,
        }
    }
}

impl DenoiserConfig {
    /// Full-scale counterpart of [`SubnetConfig::full_scale`].
    pub fn full_scale() -> Self {
        DenoiserConfig {
            base_channels: 32,
            pool_stages: 3,
            ..DenoiserConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NodeArchError> {
        if self.in_channels != 3 * PACKED_CHANNELS {
            return Err(NodeArchError::Config {
                detail: format!(
                    "denoiser consumes the 12-channel [noisy, gp, dp] stack, got in_channels {}",
                    self.in_channels
                ),
            });
        }
        self.as_subnet_shape().validate()
    }

    /// The denoiser in the shared U-shaped grammar.
    pub(crate) fn as_subnet_shape(&self) -> SubnetConfig {
        SubnetConfig {
            in_channels: self.in_channels,
            base_channels: self.base_channels,
            head_conv_count: 0,
            bottleneck: false,
            shuffle_stages: 1,
            pool_stages: self.pool_stages,
            kernel_size: self.kernel_size,
        }
    }

    pub fn downsample_factor(&self) -> usize {
        self.as_subnet_shape().downsample_factor()
    }
}

/// How the networks are wired together. Both flags default to off; they
/// exist for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WiringConfig {
    /// Sub-networks regress their noise component directly instead of its
    /// complement; the wired subtraction is skipped.
    pub direct_noise: bool,
    /// The denoiser output is added to the noisy input instead of replacing
    /// it.
    pub residual_denoiser: bool,
}

/// Optimization settings shared by pre-training and fine-tuning. The patch
/// size is in packed-domain pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub max_steps: u64,
    pub seed: u64,
    /// Random horizontal/vertical flips of each sampled patch pair.
    pub augmentation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 64,
            batch_size: 4,
            learning_rate: 1e-4,
            beta1: 0.9,
            max_steps: 2000,
            seed: 0,
            augmentation: true,
        }
    }
}

impl TrainConfig {
    /// Full-scale preset: 512-pixel patches in batches of 24.
    pub fn full_scale() -> Self {
        TrainConfig {
            patch_size: 512,
            batch_size: 24,
            ..TrainConfig::default()
        }
    }

    /// `downsample` is the coarsest downsampling factor of the networks the
    /// patches will feed.
    pub fn validate(&self, downsample: usize) -> Result<(), NodeArchError> {
        let fail = |detail: String| Err(NodeArchError::Config { detail });
        if self.patch_size == 0 || self.patch_size % downsample != 0 {
            return fail(format!(
                "patch_size {} must be a nonzero multiple of the downsampling factor {downsample}",
                self.patch_size
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be nonzero".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return fail(format!("beta1 {} must lie in [0, 1)", self.beta1));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_defaults_validate_and_downsample_by_four() {
        let cfg = SubnetConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.downsample_factor(), 4);
        let den = DenoiserConfig::default();
        den.validate().unwrap();
        assert_eq!(den.downsample_factor(), 4);
        TrainConfig::default().validate(4).unwrap();
    }

    #[test]
    fn full_scale_presets_validate() {
        SubnetConfig::full_scale().validate().unwrap();
        DenoiserConfig::full_scale().validate().unwrap();
        assert_eq!(SubnetConfig::full_scale().downsample_factor(), 16);
        TrainConfig::full_scale().validate(16).unwrap();
    }

    #[test]
    fn bad_configs_are_rejected() {
        let odd_base = SubnetConfig { base_channels: 7, ..SubnetConfig::default() };
        assert!(odd_base.validate().is_err());
        let no_shuffle = SubnetConfig { shuffle_stages: 0, ..SubnetConfig::default() };
        assert!(no_shuffle.validate().is_err());
        let even_kernel = SubnetConfig { kernel_size: 4, ..SubnetConfig::default() };
        assert!(even_kernel.validate().is_err());
        let wrong_input = DenoiserConfig { in_channels: 4, ..DenoiserConfig::default() };
        assert!(wrong_input.validate().is_err());
        let coarse_patch = TrainConfig { patch_size: 66, ..TrainConfig::default() };
        assert!(coarse_patch.validate(4).is_err());
    }
}

//! The pipeline configuration file.
//!
//! One JSON document drives every stage, parsed strictly: unknown keys are
//! rejected so a typo cannot silently fall back to a default, and every key
//! is optional so a file states only what it overrides. Stage settings
//! deliberately carry no seed fields; all seeds fan out from the single
//! global `seed` via [`crate::seed::stage_seed`], which is what makes a
//! whole run reproducible from one number.

use std::fs;
use std::path::Path;

use node_arch::{DenoiserConfig, FinetuneOptions, SubnetConfig, TileConfig, TrainConfig, WiringConfig};
use noise_lab::{DefectSynthesisParams, RansacParams};
use serde::{Deserialize, Serialize};

use crate::{io_error, CliError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Global seed; the `--seed` flag overrides it.
    pub seed: u64,
    pub calibrate: CalibrateSettings,
    pub synthesize: SynthesizeSettings,
    pub subnet: SubnetConfig,
    pub denoiser: DenoiserConfig,
    pub wiring: WiringConfig,
    pub pretrain: TrainSettings,
    pub finetune: TrainSettings,
    pub finetune_options: FinetuneOptions,
    pub tiling: TileSettings,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        config.validate().map_err(|detail| {
            CliError::Usage(format!("{}: {detail}", path.display()))
        })?;
        Ok(config)
    }

    /// Cross-field checks the serde layer cannot express.
    pub fn validate(&self) -> Result<(), String> {
        self.subnet.validate().map_err(|e| e.to_string())?;
        self.denoiser.validate().map_err(|e| e.to_string())?;
        let downsample = self.subnet.downsample_factor().max(self.denoiser.downsample_factor());
        self.pretrain.to_train_config(0).validate(self.subnet.downsample_factor()).map_err(|e| format!("pretrain: {e}"))?;
        self.finetune.to_train_config(0).validate(downsample).map_err(|e| format!("finetune: {e}"))?;
        if self.finetune_options.aux_loss_weight.is_some() && self.wiring.direct_noise {
            return Err("auxiliary losses assume complement wiring, not direct_noise".into());
        }
        self.synthesize.validate()?;
        self.calibrate.validate()?;
        self.tiling.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSettings {
    pub ransac: RansacSettings,
}

impl CalibrateSettings {
    fn validate(&self) -> Result<(), String> {
        if self.ransac.iterations == 0 {
            return Err("calibrate.ransac.iterations must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.ransac.min_inlier_fraction) {
            return Err("calibrate.ransac.min_inlier_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// [`RansacParams`] minus its seed field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacSettings {
    pub iterations: usize,
    pub inlier_threshold: Option<f64>,
    pub min_inlier_fraction: f64,
}

impl Default for RansacSettings {
    fn default() -> Self {
        let lib = RansacParams::default();
        RansacSettings {
            iterations: lib.iterations,
            inlier_threshold: lib.inlier_threshold,
            min_inlier_fraction: lib.min_inlier_fraction,
        }
    }
}

impl RansacSettings {
    pub fn with_seed(&self, seed: u64) -> RansacParams {
        RansacParams {
            iterations: self.iterations,
            inlier_threshold: self.inlier_threshold,
            min_inlier_fraction: self.min_inlier_fraction,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesizeSettings {
    pub defects: DefectSettings,
    /// Fraction of scenes assigned to the training split; the rest are
    /// held out for testing.
    pub train_fraction: f64,
}

impl Default for SynthesizeSettings {
    fn default() -> Self {
        SynthesizeSettings { defects: DefectSettings::default(), train_fraction: 0.9 }
    }
}

impl SynthesizeSettings {
    fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(format!(
                "synthesize.train_fraction {} must lie in [0, 1]",
                self.train_fraction
            ));
        }
        self.defects.validate()
    }
}

/// [`DefectSynthesisParams`] minus its seed field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefectSettings {
    pub density: f64,
    pub hot_fraction: f64,
    pub dead_fraction: f64,
}

impl Default for DefectSettings {
    fn default() -> Self {
        let lib = DefectSynthesisParams::default();
        DefectSettings {
            density: lib.density,
            hot_fraction: lib.hot_fraction,
            dead_fraction: lib.dead_fraction,
        }
    }
}

impl DefectSettings {
    fn validate(&self) -> Result<(), String> {
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(format!("synthesize.defects.density {} must lie in (0, 1)", self.density));
        }
        if self.hot_fraction < 0.0
            || self.dead_fraction < 0.0
            || self.hot_fraction + self.dead_fraction > 1.0
        {
            return Err("synthesize.defects hot/dead fractions must be nonnegative and sum to at most 1".into());
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> DefectSynthesisParams {
        DefectSynthesisParams {
            density: self.density,
            hot_fraction: self.hot_fraction,
            dead_fraction: self.dead_fraction,
            seed,
        }
    }
}

/// [`TrainConfig`] minus its seed field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub patch_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub max_steps: u64,
    pub augmentation: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let lib = TrainConfig::default();
        TrainSettings {
            patch_size: lib.patch_size,
            batch_size: lib.batch_size,
            learning_rate: lib.learning_rate,
            beta1: lib.beta1,
            max_steps: lib.max_steps,
            augmentation: lib.augmentation,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            patch_size: self.patch_size,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            max_steps: self.max_steps,
            seed,
            augmentation: self.augmentation,
        }
    }
}

/// Serializable mirror of [`TileConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileSettings {
    pub max_untiled: usize,
    pub tile: usize,
    pub overlap: usize,
}

impl Default for TileSettings {
    fn default() -> Self {
        let lib = TileConfig::default();
        TileSettings { max_untiled: lib.max_untiled, tile: lib.tile, overlap: lib.overlap }
    }
}

impl TileSettings {
    fn validate(&self) -> Result<(), String> {
        if self.tile == 0 {
            return Err("tiling.tile must be nonzero".into());
        }
        if self.overlap == 0 || self.overlap >= self.tile {
            return Err(format!("tiling.overlap {} must lie in 1..tile ({})", self.overlap, self.tile));
        }
        Ok(())
    }

    pub fn to_tile_config(&self) -> TileConfig {
        TileConfig { max_untiled: self.max_untiled, tile: self.tile, overlap: self.overlap }
    }
}

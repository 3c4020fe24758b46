//! Sensor noise calibration and synthesis for raw Bayer bursts.
//!
//! The physical model is a Gaussian-plus-Poisson ("G+P") process: a
//! photosite with true intensity `m` reads out as
//!
//! ```text
//! y ~ N(m, sigma_r_sq + sigma_s * (m - black_level))
//! ```
//!
//! where `sigma_r_sq` is signal-independent read-noise variance and
//! `sigma_s` scales the shot-noise contribution linearly with signal.
//! Both are calibrated from a burst of frames of a static scene: the
//! per-pixel sample mean and unbiased variance form (mean, variance)
//! pairs and the model line is fit robustly with RANSAC. Pixels whose
//! burst mean falls outside the model's confidence interval around a
//! local reference are flagged defective.
//!
//! The synthesis half runs the model forward to manufacture noisy
//! training data from clean images, with counter-based per-pixel RNG
//! streams so results do not depend on evaluation order.

mod defects;
mod fit;
mod model;
mod stats;
mod synth;

pub use defects::{detect_defective, synthesize_defective, DefectSynthesisParams, DefectiveMask};
pub use fit::{fit_noise_model, RansacParams};
pub use model::{confidence_bounds, normal_quantile, FitStats, NoiseModel};
pub use stats::{burst_statistics, BurstStats};
pub use synth::{synthesize_gp, synthesize_mixed};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseLabError {
    #[error("need >= 2 frames, got {actual}")]
    NeedFrames { actual: usize },
    #[error("frame {index} does not match the first frame: {detail}")]
    FrameMismatch { index: usize, detail: String },
    #[error("degenerate calibration data: {detail}")]
    Degenerate { detail: String },
    #[error(
        "inlier fraction {achieved:.3} below required minimum {required:.3}; \
         calibration data inconsistent with a G+P line"
    )]
    QualityGate { achieved: f64, required: f64 },
    #[error("invalid parameter: {detail}")]
    Params { detail: String },
    #[error("intensity {mu} outside model range [{black_level}, {white_level}]")]
    IntensityOutOfRange {
        mu: f64,
        black_level: f64,
        white_level: f64,
    },
    #[error("noise model does not match image levels: {detail}")]
    ModelMismatch { detail: String },
    #[error(transparent)]
    MaskIo(#[from] raw_core::pgm::PgmError),
    #[error("{path}: mask sample {value} at index {index} is neither 0 nor 255")]
    MaskFormat {
        path: std::path::PathBuf,
        index: usize,
        value: u16,
    },
    #[error(transparent)]
    Image(#[from] raw_core::RawImageError),
}

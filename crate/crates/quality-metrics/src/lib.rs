//! Full-reference quality metrics for raw mosaics, with defective-pixel
//! masking.
//!
//! All metrics run in the packed domain: the mosaic is split into its four
//! color planes and errors never mix samples across color channels. PSNR
//! pools squared error over every (unmasked) photosite with
//! peak = white_level; SSIM runs the standard 11x11 Gaussian window
//! (sigma 1.5, K1 = 0.01, K2 = 0.03, L = white_level) on each plane and
//! averages the four plane means. A defective-pixel mask removes photosites
//! from the PSNR pool and drops SSIM windows by center pixel (or any window
//! touching a masked pixel, in strict mode).

mod psnr;
mod report;
mod ssim;

pub use psnr::psnr;
pub use report::{evaluate_pair, write_csv_summary, MetricReport};
pub use ssim::{ssim, ssim_with_mode, MaskMode, SSIM_WINDOW};

use noise_lab::DefectiveMask;
use raw_core::RawImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch { a_width: usize, a_height: usize, b_width: usize, b_height: usize },
    #[error("mask is {mask_width}x{mask_height} but the images are {width}x{height}")]
    MaskMismatch { mask_width: usize, mask_height: usize, width: usize, height: usize },
    #[error("white levels differ: {a} vs {b}; metrics need one dynamic range")]
    WhiteLevelMismatch { a: u16, b: u16 },
    #[error("mask excludes every sample; nothing left to compare")]
    FullyMasked,
    #[error("packed plane {width}x{height} is smaller than the {window}x{window} SSIM window")]
    WindowTooSmall { width: usize, height: usize, window: usize },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Shared precondition checks for every metric entry point.
fn validate(
    a: &RawImage,
    b: &RawImage,
    mask: Option<&DefectiveMask>,
) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    if a.meta().white_level() != b.meta().white_level() {
        return Err(MetricsError::WhiteLevelMismatch {
            a: a.meta().white_level(),
            b: b.meta().white_level(),
        });
    }
    if let Some(m) = mask {
        if m.width != a.width() || m.height != a.height() {
            return Err(MetricsError::MaskMismatch {
                mask_width: m.width,
                mask_height: m.height,
                width: a.width(),
                height: a.height(),
            });
        }
    }
    Ok(())
}

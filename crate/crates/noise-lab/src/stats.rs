//! Per-pixel burst statistics.

use raw_core::{ImageMeta, RawImage};

use crate::NoiseLabError;

/// Per-pixel sample mean and unbiased variance over a burst of frames
/// of a static scene.
#[derive(Debug, Clone)]
pub struct BurstStats {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    /// Row-major per-pixel sample mean.
    pub mean: Vec<f64>,
    /// Row-major per-pixel unbiased sample variance (divisor n - 1).
    pub variance: Vec<f64>,
    pub meta: ImageMeta,
}

/// Computes per-pixel mean and unbiased variance over `frames`.
///
/// All frames must share dimensions and sensor metadata; the free-form
/// exposure tag is not compared.
pub fn burst_statistics(frames: &[RawImage]) -> Result<BurstStats, NoiseLabError> {
    if frames.len() < 2 {
        return Err(NoiseLabError::NeedFrames {
            actual: frames.len(),
        });
    }
    let first = &frames[0];
    for (index, frame) in frames.iter().enumerate().skip(1) {
        if frame.width() != first.width() || frame.height() != first.height() {
            return Err(NoiseLabError::FrameMismatch {
                index,
                detail: format!(
                    "dimensions {}x{} vs {}x{}",
                    frame.width(),
                    frame.height(),
                    first.width(),
                    first.height()
                ),
            });
        }
        let (a, b) = (frame.meta(), first.meta());
        if a.cfa != b.cfa || a.bit_depth != b.bit_depth || a.black_level != b.black_level
            || a.iso != b.iso
        {
            return Err(NoiseLabError::FrameMismatch {
                index,
                detail: "sensor metadata differs".to_string(),
            });
        }
    }

    let n = frames.len() as f64;
    let pixels = first.width() * first.height();
    let mut mean = vec![0.0f64; pixels];
    let mut variance = vec![0.0f64; pixels];
    for frame in frames {
        let data = frame.data();
        for (m, &v) in mean.iter_mut().zip(data) {
            *m += v as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    for frame in frames {
        let data = frame.data();
        for ((var, &m), &v) in variance.iter_mut().zip(&mean).zip(data) {
            let d = v as f64 - m;
            *var += d * d;
        }
    }
    for var in variance.iter_mut() {
        *var /= n - 1.0;
    }

    Ok(BurstStats {
        width: first.width(),
        height: first.height(),
        frame_count: frames.len(),
        mean,
        variance,
        meta: first.meta().clone(),
    })
}

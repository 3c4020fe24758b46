//! Peak signal-to-noise ratio over the mosaic, 10*log10(peak^2 / MSE) with
//! peak = white_level. Identical images return +infinity; the caller is
//! responsible for rendering the sentinel (JSON/CSV emit "inf").

use crate::{validate, MetricsError};
use noise_lab::DefectiveMask;
use raw_core::RawImage;

pub fn psnr(
    a: &RawImage,
    b: &RawImage,
    mask: Option<&DefectiveMask>,
) -> Result<f64, MetricsError> {
    validate(a, b, mask)?;
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;
    let width = a.width();
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        if let Some(m) = mask {
            if m.get(i / width, i % width) {
                continue;
            }
        }
        let d = f64::from(x) - f64::from(y);
        sum_sq += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::FullyMasked);
    }
    let mse = sum_sq / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = f64::from(a.meta().white_level());
    Ok(10.0 * (peak * peak / mse).log10())
}

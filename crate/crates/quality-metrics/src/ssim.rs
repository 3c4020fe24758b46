//! Structural similarity on packed planes.
//!
//! Standard single-scale SSIM: local first and second moments under an
//! 11x11 Gaussian window (sigma 1.5), combined per window as
//!
//!   ((2*mx*my + C1) * (2*cov + C2)) / ((mx^2 + my^2 + C1) * (vx + vy + C2))
//!
//! with C1 = (0.01*L)^2, C2 = (0.03*L)^2 and L = white_level. Windows are
//! evaluated only where they fit entirely inside a plane, each plane is
//! averaged separately, and the four plane means are averaged into the
//! final score. Both factors lie in [-1, 1], so the score does too.

use crate::{validate, MetricsError};
use noise_lab::DefectiveMask;
use raw_core::{pack_bayer, BayerChannel, RawImage};

pub const SSIM_WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// How a defective-pixel mask removes SSIM windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Drop a window when its center photosite is masked.
    CenterPixel,
    /// Strict mode: drop a window when any photosite under it is masked.
    AnyInWindow,
}

/// SSIM with the default center-pixel masking.
pub fn ssim(
    a: &RawImage,
    b: &RawImage,
    mask: Option<&DefectiveMask>,
) -> Result<f64, MetricsError> {
    ssim_with_mode(a, b, mask, MaskMode::CenterPixel)
}

pub fn ssim_with_mode(
    a: &RawImage,
    b: &RawImage,
    mask: Option<&DefectiveMask>,
    mode: MaskMode,
) -> Result<f64, MetricsError> {
    validate(a, b, mask)?;
    let (pa, pb) = (pack_bayer(a), pack_bayer(b));
    let (pw, ph) = (pa.width(), pa.height());
    if pw < SSIM_WINDOW || ph < SSIM_WINDOW {
        return Err(MetricsError::WindowTooSmall { width: pw, height: ph, window: SSIM_WINDOW });
    }
    let l = f64::from(a.meta().white_level());
    let c1 = (K1 * l) * (K1 * l);
    let c2 = (K2 * l) * (K2 * l);
    let kernel = gaussian_kernel();

    // Planes whose every window is excluded by the mask drop out of the
    // average; only a mask that empties all four planes is an error.
    let mut means = Vec::with_capacity(4);
    for (c, channel) in BayerChannel::ALL.iter().enumerate() {
        let xs: Vec<f64> = pa.planes()[c].iter().map(|&v| f64::from(v)).collect();
        let ys: Vec<f64> = pb.planes()[c].iter().map(|&v| f64::from(v)).collect();
        let included = window_filter(mask, mode, channel.offsets(), pw, ph);
        let (sum, count) = plane_ssim(&xs, &ys, pw, ph, &kernel, c1, c2, included.as_deref());
        if count > 0 {
            means.push(sum / count as f64);
        }
    }
    if means.is_empty() {
        return Err(MetricsError::FullyMasked);
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// Normalized 1-D Gaussian taps; the 2-D window is its outer product.
fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, tap) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *tap = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *tap;
    }
    k.iter_mut().for_each(|tap| *tap /= sum);
    k
}

/// Per-center inclusion flags for one plane under the mask, or None when
/// every window counts. Plane pixel (y, x) sits at mosaic
/// (2y + dy, 2x + dx).
fn window_filter(
    mask: Option<&DefectiveMask>,
    mode: MaskMode,
    (dy, dx): (usize, usize),
    pw: usize,
    ph: usize,
) -> Option<Vec<bool>> {
    let mask = mask?;
    let plane_masked =
        |y: usize, x: usize| -> bool { mask.get(2 * y + dy, 2 * x + dx) };
    let half = SSIM_WINDOW / 2;
    let mut included = vec![false; pw * ph];
    for cy in half..ph - half {
        for cx in half..pw - half {
            included[cy * pw + cx] = match mode {
                MaskMode::CenterPixel => !plane_masked(cy, cx),
                MaskMode::AnyInWindow => {
                    let mut clean = true;
                    'scan: for y in cy - half..=cy + half {
                        for x in cx - half..=cx + half {
                            if plane_masked(y, x) {
                                clean = false;
                                break 'scan;
                            }
                        }
                    }
                    clean
                }
            };
        }
    }
    Some(included)
}

/// Sum and count of SSIM over all (included) fully-interior window centers
/// of one plane.
fn plane_ssim(
    xs: &[f64],
    ys: &[f64],
    pw: usize,
    ph: usize,
    kernel: &[f64; SSIM_WINDOW],
    c1: f64,
    c2: f64,
    included: Option<&[bool]>,
) -> (f64, usize) {
    let half = SSIM_WINDOW / 2;
    // Horizontal Gaussian pass over the five moment fields, valid columns only.
    let fields: [&dyn Fn(usize) -> f64; 5] = [
        &|i| xs[i],
        &|i| ys[i],
        &|i| xs[i] * xs[i],
        &|i| ys[i] * ys[i],
        &|i| xs[i] * ys[i],
    ];
    let mut horiz = vec![[0.0f64; 5]; pw * ph];
    for y in 0..ph {
        for cx in half..pw - half {
            let mut acc = [0.0f64; 5];
            for (k, tap) in kernel.iter().enumerate() {
                let i = y * pw + cx - half + k;
                for (f, a) in fields.iter().zip(acc.iter_mut()) {
                    *a += tap * f(i);
                }
            }
            horiz[y * pw + cx] = acc;
        }
    }

    let mut sum = 0.0;
    let mut count = 0usize;
    for cy in half..ph - half {
        for cx in half..pw - half {
            if let Some(inc) = included {
                if !inc[cy * pw + cx] {
                    continue;
                }
            }
            let mut m = [0.0f64; 5];
            for (k, tap) in kernel.iter().enumerate() {
                let row = &horiz[(cy - half + k) * pw + cx];
                for (a, &v) in m.iter_mut().zip(row.iter()) {
                    *a += tap * v;
                }
            }
            let [mx, my, mxx, myy, mxy] = m;
            let (vx, vy) = (mxx - mx * mx, myy - my * my);
            let cov = mxy - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    (sum, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use raw_core::ImageMeta;

    fn flat(width: usize, height: usize, value: u16) -> RawImage {
        RawImage::new(width, height, vec![value; width * height], ImageMeta::default()).unwrap()
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..SSIM_WINDOW / 2 {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
        assert!(k[5] > k[4] && k[4] > k[3]);
    }

    #[test]
    fn identical_images_score_exactly_one() {
        let a = flat(24, 24, 700);
        assert_eq!(ssim(&a, &a, None).unwrap(), 1.0);
    }

    #[test]
    fn constant_images_reduce_to_the_luminance_term() {
        // Zero variance kills the structure factor; only
        // (2*ma*mb + C1) / (ma^2 + mb^2 + C1) remains.
        let a = flat(24, 24, 400);
        let b = flat(24, 24, 600);
        let (ma, mb) = (400.0f64, 600.0f64);
        let c1 = (0.01 * 1023.0f64).powi(2);
        let expect = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        assert!((ssim(&a, &b, None).unwrap() - expect).abs() < 1e-6);
    }

    #[test]
    fn planes_smaller_than_the_window_are_rejected() {
        // 20x20 mosaic packs to 10x10 planes, one short of the window.
        let a = flat(20, 20, 100);
        assert!(matches!(
            ssim(&a, &a, None),
            Err(MetricsError::WindowTooSmall { width: 10, height: 10, window: 11 })
        ));
    }

    #[test]
    fn strict_masking_excludes_whole_windows() {
        // Defect at mosaic (1,1) = B-plane (0,0): only the corner window
        // of the B plane straddles it, and that window is never a valid
        // center, so center-pixel masking keeps the perturbed window while
        // strict mode drops it.
        let mut data = vec![500u16; 30 * 30];
        data[30 + 1] = 1000;
        let a = RawImage::new(30, 30, data, ImageMeta::default()).unwrap();
        let b = flat(30, 30, 500);
        let mut mask = DefectiveMask::new_clear(30, 30);
        mask.flags[30 + 1] = true;

        let center = ssim(&a, &b, Some(&mask)).unwrap();
        let strict = ssim_with_mode(&a, &b, Some(&mask), MaskMode::AnyInWindow).unwrap();
        assert!(center < 1.0);
        assert_eq!(strict, 1.0);
    }

    #[test]
    fn a_mask_emptying_every_plane_is_rejected() {
        let a = flat(22, 22, 300);
        let mut mask = DefectiveMask::new_clear(22, 22);
        mask.flags.iter_mut().for_each(|f| *f = true);
        assert!(matches!(ssim(&a, &a, Some(&mask)), Err(MetricsError::FullyMasked)));
    }
}

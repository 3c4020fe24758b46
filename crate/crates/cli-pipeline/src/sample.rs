//! Generated sample data: smooth scenes and calibration bursts.
//!
//! The sample dataset is generated rather than shipped. Scenes are
//! per-channel bilinear ramps with a few soft radial bumps shared across
//! channels: smooth enough that a small network can learn them, varied
//! enough that it cannot memorize one layout. Calibration bursts apply a
//! known noise model to a static intensity staircase, so a model fitted
//! from the burst can be compared against its generator.

use noise_lab::{synthesize_gp, FitStats, NoiseModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raw_core::{ImageMeta, RawImage};

use crate::seed::stage_seed;
use crate::CliError;

/// Scene DNs stay inside this band, clear of both levels, so synthetic
/// noise has headroom before clamping.
const SCENE_FLOOR: f64 = 80.0;
const SCENE_CEIL: f64 = 960.0;

/// One smooth random scene with the default 10-bit metadata.
pub fn sample_scene(width: usize, height: usize, seed: u64) -> RawImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Four bilinear corner values per CFA channel.
    let corners: Vec<[f64; 4]> =
        (0..4).map(|_| std::array::from_fn(|_| rng.random_range(200.0..820.0))).collect();
    struct Bump {
        cx: f64,
        cy: f64,
        inv_two_sigma_sq: f64,
        amp: f64,
    }
    let bumps: Vec<Bump> = (0..3)
        .map(|_| {
            let sigma: f64 = rng.random_range(8.0..24.0);
            Bump {
                cx: rng.random_range(0.0..width as f64),
                cy: rng.random_range(0.0..height as f64),
                inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
                amp: rng.random_range(40.0..160.0) * if rng.random::<bool>() { 1.0 } else { -1.0 },
            }
        })
        .collect();

    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = y as f64 / (height - 1) as f64;
        for x in 0..width {
            let u = x as f64 / (width - 1) as f64;
            let c = &corners[(y % 2) * 2 + (x % 2)];
            let ramp = c[0] * (1.0 - u) * (1.0 - v)
                + c[1] * u * (1.0 - v)
                + c[2] * (1.0 - u) * v
                + c[3] * u * v;
            let bump: f64 = bumps
                .iter()
                .map(|b| {
                    let d2 = (x as f64 - b.cx).powi(2) + (y as f64 - b.cy).powi(2);
                    b.amp * (-d2 * b.inv_two_sigma_sq).exp()
                })
                .sum();
            data.push((ramp + bump).clamp(SCENE_FLOOR, SCENE_CEIL).round() as u16);
        }
    }
    RawImage::new(width, height, data, ImageMeta::default()).expect("generated scene is valid")
}

/// `count` scenes, each from its own stream of `seed`.
pub fn sample_scenes(count: usize, width: usize, height: usize, seed: u64) -> Vec<RawImage> {
    (0..count)
        .map(|i| sample_scene(width, height, stage_seed(seed, &format!("scene/{i}"))))
        .collect()
}

/// A noise-free horizontal staircase: `levels` equal bands spanning
/// `lo..=hi` top to bottom. Every band is one flat intensity, which is what
/// a mean/variance calibration needs.
pub fn staircase_scene(width: usize, height: usize, levels: usize, lo: u16, hi: u16) -> RawImage {
    assert!(levels >= 2 && height >= levels, "bands need rows");
    let step = f64::from(hi - lo) / (levels - 1) as f64;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let band = (y * levels / height).min(levels - 1);
        let value = (f64::from(lo) + step * band as f64).round() as u16;
        data.extend(std::iter::repeat_n(value, width));
    }
    RawImage::new(width, height, data, ImageMeta::default()).expect("staircase is valid")
}

/// A noise model with the given parameters over `meta`'s levels, as a burst
/// generator or detection reference.
pub fn known_model(meta: &ImageMeta, sigma_r_sq: f64, sigma_s: f64) -> NoiseModel {
    NoiseModel {
        sigma_r_sq,
        sigma_s,
        black_level: f64::from(meta.black_level),
        white_level: f64::from(meta.white_level()),
        confidence: 0.99,
        fit_stats: FitStats { inlier_count: 0, total_count: 0, residual_rms: 0.0 },
    }
}

/// `frames` independent noisy readouts of one static scene.
pub fn calibration_burst(
    clean: &RawImage,
    sigma_r_sq: f64,
    sigma_s: f64,
    frames: usize,
    seed: u64,
) -> Result<Vec<RawImage>, CliError> {
    let model = known_model(clean.meta(), sigma_r_sq, sigma_s);
    (0..frames)
        .map(|i| Ok(synthesize_gp(clean, &model, stage_seed(seed, &format!("frame/{i}")))?))
        .collect()
}

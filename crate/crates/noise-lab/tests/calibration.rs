//! Closed-loop calibration oracles: synthesize noise with known
//! parameters, then require the estimators to recover them.

use noise_lab::{
    burst_statistics, detect_defective, fit_noise_model, synthesize_gp, DefectSynthesisParams,
    FitStats, NoiseModel, RansacParams,
};
use raw_core::{ImageMeta, RawImage};

fn model(sigma_r_sq: f64, sigma_s: f64, black_level: u16) -> NoiseModel {
    NoiseModel {
        sigma_r_sq,
        sigma_s,
        black_level: black_level as f64,
        white_level: 1023.0,
        confidence: 0.99,
        fit_stats: FitStats {
            inlier_count: 0,
            total_count: 0,
            residual_rms: 0.0,
        },
    }
}

fn meta_black(black_level: u16) -> ImageMeta {
    ImageMeta {
        black_level,
        ..ImageMeta::default()
    }
}

/// 10-level intensity ramp in equal horizontal bands, 400x250 mosaic.
fn ramp_image(black_level: u16) -> RawImage {
    let (w, h) = (400usize, 250usize);
    let levels: Vec<u16> = (0..10)
        .map(|i| black_level + 10 + (i as u16) * 93)
        .collect();
    let data: Vec<u16> = (0..h)
        .flat_map(|y| {
            let level = levels[y * 10 / h];
            std::iter::repeat(level).take(w)
        })
        .collect();
    RawImage::new(w, h, data, meta_black(black_level)).unwrap()
}

#[test]
fn closed_loop_recovers_parameters_within_five_percent() {
    let truth = model(4.0, 0.5, 64);
    let clean = ramp_image(64);
    for seed in 0..3u64 {
        let frames: Vec<RawImage> = (0..12)
            .map(|f| synthesize_gp(&clean, &truth, seed * 100 + f).unwrap())
            .collect();
        let stats = burst_statistics(&frames).unwrap();
        let fitted = fit_noise_model(&stats, &RansacParams::default()).unwrap();
        let r_err = (fitted.sigma_r_sq - 4.0).abs() / 4.0;
        let s_err = (fitted.sigma_s - 0.5).abs() / 0.5;
        assert!(
            r_err < 0.05,
            "seed {seed}: sigma_r_sq = {} ({r_err:.3} rel)",
            fitted.sigma_r_sq
        );
        assert!(
            s_err < 0.05,
            "seed {seed}: sigma_s = {} ({s_err:.3} rel)",
            fitted.sigma_s
        );
    }
}

#[test]
fn synthesized_moments_match_the_model() {
    // Constant 200 DN above a zero black level: mean 200, variance
    // 4 + 0.5 * 200 = 104.
    let truth = model(4.0, 0.5, 0);
    let clean = RawImage::new(1000, 1000, vec![200; 1_000_000], meta_black(0)).unwrap();
    let noisy = synthesize_gp(&clean, &truth, 77).unwrap();
    let n = noisy.data().len() as f64;
    let mean: f64 = noisy.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var: f64 = noisy
        .data()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    assert!((mean - 200.0).abs() / 200.0 < 0.005, "mean = {mean}");
    assert!((var - 104.0).abs() / 104.0 < 0.03, "variance = {var}");
}

#[test]
fn burst_variance_pools_to_truth() {
    // Pure read noise at variance 54: the pooled per-pixel unbiased
    // variance over 10^5 pixels must sit within 3%.
    let truth = model(54.0, 0.0, 64);
    let clean = RawImage::new(400, 250, vec![500; 100_000], meta_black(64)).unwrap();
    let frames: Vec<RawImage> = (0..12)
        .map(|f| synthesize_gp(&clean, &truth, 900 + f).unwrap())
        .collect();
    let stats = burst_statistics(&frames).unwrap();
    let pooled: f64 = stats.variance.iter().sum::<f64>() / stats.variance.len() as f64;
    assert!((pooled - 54.0).abs() / 54.0 < 0.03, "pooled = {pooled}");
}

#[test]
fn detection_recalls_planted_stuck_pixels() {
    let truth = model(4.0, 0.5, 64);
    let clean = RawImage::new(200, 200, vec![400; 40_000], meta_black(64)).unwrap();
    let planted: Vec<usize> = (0..20).map(|i| (i * 1997 + 83) % 40_000).collect();
    let frames: Vec<RawImage> = (0..12)
        .map(|f| {
            let gp = synthesize_gp(&clean, &truth, 40 + f).unwrap();
            let mut data = gp.into_data();
            for &site in &planted {
                data[site] = 1023;
            }
            RawImage::new(200, 200, data, meta_black(64)).unwrap()
        })
        .collect();
    let mask = detect_defective(&frames, &truth).unwrap();
    for &site in &planted {
        assert!(mask.flags[site], "missed planted defect at {site}");
    }
    let false_positives = mask.popcount() - planted.len();
    // Empirical false positives stay below 1.5 * (1 - confidence).
    assert!(
        (false_positives as f64) < 1.5 * 0.01 * 40_000.0,
        "false positives = {false_positives}"
    );
}

#[test]
fn flag_rate_on_clean_burst_stays_below_bound() {
    let truth = model(4.0, 0.5, 64);
    let clean = RawImage::new(200, 200, vec![300; 40_000], meta_black(64)).unwrap();
    let frames: Vec<RawImage> = (0..12)
        .map(|f| synthesize_gp(&clean, &truth, 7000 + f).unwrap())
        .collect();
    let mask = detect_defective(&frames, &truth).unwrap();
    let rate = mask.popcount() as f64 / 40_000.0;
    assert!(rate <= 1.5 * (1.0 - 0.99), "flag rate = {rate}");
}

#[test]
fn end_to_end_calibration_then_detection() {
    // Fit from one synthetic burst, then reuse the fitted model to
    // screen a second burst with planted defects.
    let truth = model(6.0, 0.4, 64);
    let clean = ramp_image(64);
    let frames: Vec<RawImage> = (0..12)
        .map(|f| synthesize_gp(&clean, &truth, 500 + f).unwrap())
        .collect();
    let stats = burst_statistics(&frames).unwrap();
    let fitted = fit_noise_model(&stats, &RansacParams::default()).unwrap();
    assert!((fitted.sigma_r_sq - 6.0).abs() / 6.0 < 0.05);
    assert!((fitted.sigma_s - 0.4).abs() / 0.4 < 0.05);

    let scene = RawImage::new(100, 100, vec![500; 10_000], meta_black(64)).unwrap();
    let params = DefectSynthesisParams {
        density: 0.002,
        hot_fraction: 1.0,
        dead_fraction: 0.0,
        seed: 3,
    };
    let (defective_scene, planted) =
        noise_lab::synthesize_defective(&scene, &params).unwrap();
    let screen_frames: Vec<RawImage> = (0..12)
        .map(|f| {
            let gp = synthesize_gp(&scene, &truth, 600 + f).unwrap();
            let mut data = gp.into_data();
            for (i, flag) in planted.flags.iter().enumerate() {
                if *flag {
                    data[i] = defective_scene.data()[i];
                }
            }
            RawImage::new(100, 100, data, meta_black(64)).unwrap()
        })
        .collect();
    let detected = detect_defective(&screen_frames, &fitted).unwrap();
    let hits = planted
        .flags
        .iter()
        .zip(&detected.flags)
        .filter(|(&p, &d)| p && d)
        .count();
    assert_eq!(hits, planted.popcount(), "all stuck-at-white pixels found");
}

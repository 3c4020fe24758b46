//! Robust mean/variance line fitting.
//!
//! The fit runs in shifted coordinates `u = mean - black_level`,
//! `v = variance` and recovers the line `v = sigma_r_sq + sigma_s * u`:
//!
//! 1. Pairs are sorted canonically and aggregated into up to 256
//!    equal-population bins by mean, taming the heavy-tailed per-pixel
//!    variance estimator (a 12-frame variance has ~40% relative noise)
//!    and making the fit independent of pixel order.
//! 2. RANSAC with a 2-point minimal model scores candidate lines by
//!    inlier count; the inlier band defaults to 3x the median absolute
//!    residual of an initial least-squares fit.
//! 3. The winning inlier set is refit by iteratively reweighted least
//!    squares with weights `1 / variance^2`, matching the sampling
//!    noise of a variance estimator (std proportional to the true
//!    variance). Unweighted refitting would let the bright, noisy end
//!    of the ramp dominate and leave the read-noise intercept poorly
//!    determined.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{FitStats, NoiseModel};
use crate::stats::BurstStats;
use crate::NoiseLabError;

/// Controls for [`fit_noise_model`]'s RANSAC stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacParams {
    /// Number of random 2-point candidates to score.
    pub iterations: usize,
    /// Absolute residual bound (squared DN) for inlier membership;
    /// `None` selects the adaptive 3x-median-residual band.
    pub inlier_threshold: Option<f64>,
    /// Minimum fraction of points the winning line must explain.
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 500,
            inlier_threshold: None,
            min_inlier_fraction: 0.5,
            seed: 0,
        }
    }
}

const MAX_BINS: usize = 256;
const IRLS_ROUNDS: usize = 3;
/// Default two-sided confidence carried by fitted models.
const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Fits the G+P noise model to burst statistics.
///
/// The result is independent of pixel ordering: pairs are canonically
/// sorted before binning, and all randomness comes from `params.seed`.
pub fn fit_noise_model(
    stats: &BurstStats,
    params: &RansacParams,
) -> Result<NoiseModel, NoiseLabError> {
    if params.iterations == 0 {
        return Err(NoiseLabError::Params {
            detail: "ransac iterations must be >= 1".to_string(),
        });
    }
    if !(0.0..=1.0).contains(&params.min_inlier_fraction) {
        return Err(NoiseLabError::Params {
            detail: "min_inlier_fraction must lie in [0, 1]".to_string(),
        });
    }

    let black_level = stats.meta.black_level as f64;
    let mut pairs: Vec<(f64, f64)> = stats
        .mean
        .iter()
        .zip(&stats.variance)
        .map(|(&m, &v)| (m - black_level, v))
        .collect();
    pairs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    if pairs.is_empty() {
        return Err(NoiseLabError::Degenerate {
            detail: "no calibration pixels".to_string(),
        });
    }

    let points = aggregate_bins(&pairs);
    let n = points.len();
    let u_spread = points[n - 1].0 - points[0].0;
    if n < 2 || u_spread <= f64::EPSILON * (1.0 + points[n - 1].0.abs()) {
        return Err(NoiseLabError::Degenerate {
            detail: "calibration needs at least two distinct intensity levels".to_string(),
        });
    }

    let v_scale = points
        .iter()
        .map(|&(_, v)| v.abs())
        .fold(0.0f64, f64::max);
    let threshold = match params.inlier_threshold {
        Some(t) => t,
        None => {
            let (a0, b0) = least_squares(&points, None);
            let mut residuals: Vec<f64> = points
                .iter()
                .map(|&(u, v)| (v - (a0 + b0 * u)).abs())
                .collect();
            // Floor rescues exactly collinear data, where the median
            // residual is pure rounding noise.
            (3.0 * median_in_place(&mut residuals)).max(1e-9 * (1.0 + v_scale))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best_count = 0usize;
    let mut best_line = (0.0f64, 0.0f64);
    for _ in 0..params.iterations {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let (ui, vi) = points[i];
        let (uj, vj) = points[j];
        if (ui - uj).abs() <= f64::EPSILON * (1.0 + ui.abs().max(uj.abs())) {
            continue;
        }
        let slope = (vj - vi) / (uj - ui);
        let intercept = vi - slope * ui;
        let count = points
            .iter()
            .filter(|&&(u, v)| (v - (intercept + slope * u)).abs() <= threshold)
            .count();
        if count > best_count {
            best_count = count;
            best_line = (intercept, slope);
        }
    }

    let achieved = best_count as f64 / n as f64;
    if achieved < params.min_inlier_fraction {
        return Err(NoiseLabError::QualityGate {
            achieved,
            required: params.min_inlier_fraction,
        });
    }

    let (bi, bs) = best_line;
    let inliers: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(u, v)| (v - (bi + bs * u)).abs() <= threshold)
        .collect();

    // IRLS refit: weights track the predicted variance of each point.
    let v_floor = 1e-6 * (1.0 + v_scale);
    let (mut a, mut b) = least_squares(&inliers, None);
    for _ in 0..IRLS_ROUNDS {
        let weights: Vec<f64> = inliers
            .iter()
            .map(|&(u, _)| {
                let pred = (a + b * u).max(v_floor);
                1.0 / (pred * pred)
            })
            .collect();
        let refit = least_squares(&inliers, Some(&weights));
        (a, b) = refit;
    }

    let residual_rms = (inliers
        .iter()
        .map(|&(u, v)| {
            let r = v - (a + b * u);
            r * r
        })
        .sum::<f64>()
        / inliers.len() as f64)
        .sqrt();

    Ok(NoiseModel {
        // Physical noise parameters cannot be negative; tiny negative
        // estimates on near-noiseless data clamp to zero.
        sigma_r_sq: a.max(0.0),
        sigma_s: b.max(0.0),
        black_level,
        white_level: stats.meta.white_level() as f64,
        confidence: DEFAULT_CONFIDENCE,
        fit_stats: FitStats {
            inlier_count: inliers.len(),
            total_count: n,
            residual_rms,
        },
    })
}

/// Aggregates sorted pairs into equal-population bins, averaging both
/// coordinates. With `MAX_BINS` or fewer pairs this is the identity.
fn aggregate_bins(sorted_pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = sorted_pairs.len();
    let bins = n.min(MAX_BINS);
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let start = b * n / bins;
        let end = (b + 1) * n / bins;
        let span = &sorted_pairs[start..end];
        let inv = 1.0 / span.len() as f64;
        let (su, sv) = span
            .iter()
            .fold((0.0, 0.0), |(su, sv), &(u, v)| (su + u, sv + v));
        out.push((su * inv, sv * inv));
    }
    out
}

/// Ordinary or weighted least-squares line fit, returning (intercept, slope).
fn least_squares(points: &[(f64, f64)], weights: Option<&[f64]>) -> (f64, f64) {
    let mut sw = 0.0;
    let mut su = 0.0;
    let mut sv = 0.0;
    let mut suu = 0.0;
    let mut suv = 0.0;
    for (idx, &(u, v)) in points.iter().enumerate() {
        let w = weights.map_or(1.0, |ws| ws[idx]);
        sw += w;
        su += w * u;
        sv += w * v;
        suu += w * u * u;
        suv += w * u * v;
    }
    let det = sw * suu - su * su;
    if det.abs() <= f64::EPSILON * sw * suu {
        return (sv / sw.max(f64::MIN_POSITIVE), 0.0);
    }
    let slope = (sw * suv - su * sv) / det;
    let intercept = (sv - slope * su) / sw;
    (intercept, slope)
}

fn median_in_place(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use raw_core::ImageMeta;

    /// Stats holding exactly the provided (mean, variance) pairs.
    pub(crate) fn stats_from_pairs(pairs: &[(f64, f64)], black_level: u16) -> BurstStats {
        let mut meta = ImageMeta::default();
        meta.black_level = black_level;
        BurstStats {
            width: pairs.len(),
            height: 1,
            frame_count: 12,
            mean: pairs.iter().map(|&(m, _)| m).collect(),
            variance: pairs.iter().map(|&(_, v)| v).collect(),
            meta,
        }
    }

    fn line_pairs(count: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
        (0..count)
            .map(|i| {
                let mu = 10.0 + 900.0 * i as f64 / (count - 1) as f64;
                (mu, a + b * mu)
            })
            .collect()
    }

    #[test]
    fn recovers_noiseless_line_exactly() {
        let stats = stats_from_pairs(&line_pairs(200, 4.0, 0.5), 0);
        let model = fit_noise_model(&stats, &RansacParams::default()).unwrap();
        assert!((model.sigma_r_sq - 4.0).abs() < 1e-9, "{}", model.sigma_r_sq);
        assert!((model.sigma_s - 0.5).abs() < 1e-9, "{}", model.sigma_s);
        assert_eq!(model.fit_stats.inlier_count, 200);
        assert_eq!(model.fit_stats.total_count, 200);
    }

    #[test]
    fn shifts_by_black_level() {
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let mu = 100.0 + 8.0 * i as f64;
                (mu, 4.0 + 0.5 * (mu - 64.0))
            })
            .collect();
        let model = fit_noise_model(&stats_from_pairs(&pairs, 64), &RansacParams::default())
            .unwrap();
        assert!((model.sigma_r_sq - 4.0).abs() < 1e-9);
        assert!((model.sigma_s - 0.5).abs() < 1e-9);
        assert_eq!(model.black_level, 64.0);
    }

    #[test]
    fn excludes_variance_outliers() {
        // 20% of the 256 pairs replaced by wild variances; with one
        // pair per bin the aggregation is the identity, so recovery
        // must be exact and the outliers must be rejected.
        let mut pairs = line_pairs(256, 4.0, 0.5);
        for i in 0..51 {
            pairs[i * 5].1 = 1e4;
        }
        let model =
            fit_noise_model(&stats_from_pairs(&pairs, 0), &RansacParams::default()).unwrap();
        assert!((model.sigma_r_sq - 4.0).abs() < 1e-6, "{}", model.sigma_r_sq);
        assert!((model.sigma_s - 0.5).abs() < 1e-6, "{}", model.sigma_s);
        assert_eq!(model.fit_stats.inlier_count, 256 - 51);
    }

    #[test]
    fn rejects_degenerate_single_intensity() {
        let pairs = vec![(100.0, 54.0); 64];
        assert!(matches!(
            fit_noise_model(&stats_from_pairs(&pairs, 0), &RansacParams::default()),
            Err(NoiseLabError::Degenerate { .. })
        ));
    }

    #[test]
    fn quality_gate_fires_on_scattered_data() {
        // A majority of points far off any line: no candidate reaches
        // the required inlier fraction with a tight manual band.
        let mut pairs = line_pairs(64, 4.0, 0.5);
        for (i, pair) in pairs.iter_mut().enumerate().take(40) {
            pair.1 += ((i * 2654435761) % 9973) as f64;
        }
        let params = RansacParams {
            inlier_threshold: Some(1e-3),
            ..RansacParams::default()
        };
        assert!(matches!(
            fit_noise_model(&stats_from_pairs(&pairs, 0), &params),
            Err(NoiseLabError::QualityGate { .. })
        ));
    }

    #[test]
    fn invariant_under_pair_permutation() {
        let mut pairs = line_pairs(300, 6.0, 0.25);
        for (i, pair) in pairs.iter_mut().enumerate() {
            // Deterministic pseudo-noise, small relative to the band.
            pair.1 += (((i * 48271) % 101) as f64 - 50.0) * 1e-3;
        }
        let forward = fit_noise_model(&stats_from_pairs(&pairs, 0), &RansacParams::default())
            .unwrap();
        pairs.reverse();
        pairs.swap(0, 7);
        pairs.swap(100, 200);
        let shuffled = fit_noise_model(&stats_from_pairs(&pairs, 0), &RansacParams::default())
            .unwrap();
        assert_eq!(forward.sigma_r_sq, shuffled.sigma_r_sq);
        assert_eq!(forward.sigma_s, shuffled.sigma_s);
        assert_eq!(forward.fit_stats, shuffled.fit_stats);
    }
}

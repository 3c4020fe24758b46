//! The calibrated G+P noise model and its confidence intervals.

use serde::{Deserialize, Serialize};

use crate::NoiseLabError;

/// Diagnostics from the robust line fit that produced a model.
///
/// Counts refer to the aggregated (mean, variance) points the fit
/// operated on, not raw pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitStats {
    pub inlier_count: usize,
    pub total_count: usize,
    /// Root-mean-square variance residual over the final inlier set.
    pub residual_rms: f64,
}

/// Calibrated sensor noise model: `Var(y) = sigma_r_sq + sigma_s * (mean - black_level)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Read-noise variance in squared DN; nonnegative.
    pub sigma_r_sq: f64,
    /// Shot-noise slope in DN; nonnegative.
    pub sigma_s: f64,
    pub black_level: f64,
    pub white_level: f64,
    /// Two-sided confidence level used by interval queries, e.g. 0.99.
    pub confidence: f64,
    pub fit_stats: FitStats,
}

impl NoiseModel {
    /// Model variance at true intensity `mu` (in DN, black level included).
    pub fn variance_at(&self, mu: f64) -> f64 {
        self.sigma_r_sq + self.sigma_s * (mu - self.black_level)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Two-sided confidence interval around `mu` for a single readout, i.e.
/// `mu +- z * sqrt(variance_at(mu))` with `z` the standard normal
/// quantile at `(1 + confidence) / 2`, clamped to `[0, white_level]`.
pub fn confidence_bounds(model: &NoiseModel, mu: f64) -> Result<(f64, f64), NoiseLabError> {
    if !(model.black_level..=model.white_level).contains(&mu) {
        return Err(NoiseLabError::IntensityOutOfRange {
            mu,
            black_level: model.black_level,
            white_level: model.white_level,
        });
    }
    let z = normal_quantile((1.0 + model.confidence) / 2.0);
    let spread = z * model.variance_at(mu).max(0.0).sqrt();
    Ok((
        (mu - spread).max(0.0),
        (mu + spread).min(model.white_level),
    ))
}

/// Standard normal quantile (inverse CDF) via Acklam's rational
/// approximation; relative error below 1.2e-9 over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile requires p in (0, 1)");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |p: f64| {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail(p)
    } else if p > 1.0 - P_LOW {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

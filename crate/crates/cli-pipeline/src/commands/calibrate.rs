//! `calibrate`: fit the sensor noise model from a burst.

use std::fs;
use std::path::Path;

use noise_lab::{burst_statistics, detect_defective, fit_noise_model};
use serde_json::json;

use crate::commands::{list_pgms, read_raw};
use crate::seed::stage_seed;
use crate::{io_error, logging, CliError, Context};

/// Reads the aligned frames in `burst_dir`, fits the noise model, flags
/// defective pixels, and writes `noise_model.json` plus
/// `defective_mask.pgm`.
pub fn run(ctx: &Context, burst_dir: &Path) -> Result<(), CliError> {
    let files = list_pgms(burst_dir)?;
    if files.len() < 2 {
        return Err(CliError::Usage(format!(
            "{}: need \u{2265} 2 frames for calibration, found {}",
            burst_dir.display(),
            files.len()
        )));
    }
    let frames = files.iter().map(|p| read_raw(p)).collect::<Result<Vec<_>, _>>()?;
    let stats = burst_statistics(&frames)?;
    let ransac = ctx.config.calibrate.ransac.with_seed(stage_seed(ctx.seed, "calibrate"));
    let model = fit_noise_model(&stats, &ransac)?;
    let mask = detect_defective(&frames, &model)?;

    let model_path = ctx.out.join("noise_model.json");
    fs::write(&model_path, model.to_json()).map_err(|e| io_error(&model_path, e))?;
    mask.save(&ctx.out.join("defective_mask.pgm"))?;

    logging::event(
        "fit_stats",
        json!({
            "sigma_r_sq": model.sigma_r_sq,
            "sigma_s": model.sigma_s,
            "inlier_count": model.fit_stats.inlier_count,
            "total_count": model.fit_stats.total_count,
            "residual_rms": model.fit_stats.residual_rms,
            "defective_pixels": mask.popcount(),
        }),
    );
    Ok(())
}

//! `synthesize`: corrupt clean images into the three training datasets.
//!
//! Every clean scene yields three variants: `gp` (Gaussian+Poisson noise
//! only), `defect` (planted defective pixels only), and `mixed` (noise,
//! then defects on top). Each variant draws from its own seed stream, so
//! the three corruptions of one scene are independent. The manifest is
//! written last; its presence marks a completed dataset.

use std::fs;
use std::path::Path;

use noise_lab::{synthesize_defective, synthesize_gp, synthesize_mixed, NoiseModel};
use raw_core::io::save_raw;
use serde_json::json;

use crate::commands::{list_pgms, read_raw};
use crate::manifest::{assign_splits, Manifest, ManifestEntry, Split};
use crate::seed::stage_seed;
use crate::{io_error, logging, CliError, Context};

const VARIANTS: [&str; 3] = ["gp", "defect", "mixed"];

/// Builds the dataset under `ctx.out` from the scenes in `clean_dir` and
/// the calibrated model at `model_path`.
pub fn run(ctx: &Context, clean_dir: &Path, model_path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(model_path).map_err(|e| io_error(model_path, e))?;
    let model = NoiseModel::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", model_path.display())))?;

    let files = list_pgms(clean_dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no clean images (*.pgm) to synthesize from",
            clean_dir.display()
        )));
    }
    for sub in ["clean", "gp", "defect", "mixed"] {
        let dir = ctx.out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    }

    // Splits are per scene, so no variant of a held-out scene leaks into
    // training.
    let splits = assign_splits(
        files.len(),
        ctx.config.synthesize.train_fraction,
        stage_seed(ctx.seed, "synthesize/split"),
    );

    let mut entries = Vec::with_capacity(files.len() * VARIANTS.len());
    for (path, &split) in files.iter().zip(&splits) {
        let scene = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::Usage(format!("{}: unusable file name", path.display())))?;
        let clean = read_raw(path)?;
        let scene_seed = |stage: &str| stage_seed(ctx.seed, &format!("synthesize/{scene}/{stage}"));

        let gp = synthesize_gp(&clean, &model, scene_seed("gp"))?;
        let (defect, defect_mask) =
            synthesize_defective(&clean, &ctx.config.synthesize.defects.with_seed(scene_seed("defects")))?;
        let (mixed, mixed_mask) = synthesize_mixed(
            &clean,
            &model,
            &ctx.config.synthesize.defects.with_seed(scene_seed("mixed-defects")),
            scene_seed("mixed-gp"),
        )?;

        let save = |img, rel: String| -> Result<String, CliError> {
            save_raw(img, &ctx.out.join(&rel))?;
            Ok(rel)
        };
        let clean_rel = save(&clean, format!("clean/{scene}.pgm"))?;
        let variant_rels = [
            (save(&gp, format!("gp/{scene}.pgm"))?, None),
            (save(&defect, format!("defect/{scene}.pgm"))?, Some(&defect_mask)),
            (save(&mixed, format!("mixed/{scene}.pgm"))?, Some(&mixed_mask)),
        ];
        for (variant, (noisy_rel, mask)) in VARIANTS.iter().zip(variant_rels) {
            let mask_rel = match mask {
                Some(m) => {
                    let rel = format!("{variant}/{scene}.mask.pgm");
                    m.save(&ctx.out.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            entries.push(ManifestEntry {
                id: format!("{scene}.{variant}"),
                noisy_path: Some(noisy_rel),
                burst_dir: None,
                clean_path: Some(clean_rel.clone()),
                mask_path: mask_rel,
                split,
                device: None,
            });
        }
    }

    let manifest = Manifest::new(entries, &ctx.out)?;
    manifest.save(&ctx.out.join("manifest.json"))?;
    logging::event(
        "synthesized",
        json!({
            "scenes": files.len(),
            "entries": manifest.entries.len(),
            "train_scenes": splits.iter().filter(|s| **s == Split::Train).count(),
            "test_scenes": splits.iter().filter(|s| **s == Split::Test).count(),
            "content_hash": manifest.content_hash,
        }),
    );
    Ok(())
}

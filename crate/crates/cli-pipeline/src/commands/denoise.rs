//! `denoise`: run the trained model over a dataset split.

use std::path::Path;

use node_arch::{denoise_image, NodeModel};
use raw_core::io::save_raw;
use serde_json::json;

use crate::commands::read_raw;
use crate::manifest::{Manifest, Split};
use crate::{logging, CliError, Context};

/// Denoises every selected entry, writing `<entry id>.pgm` into `ctx.out`
/// in manifest order.
pub fn run(
    ctx: &Context,
    manifest_path: &Path,
    model_path: &Path,
    split: Option<Split>,
    variant: Option<&str>,
) -> Result<(), CliError> {
    let (model, _) = NodeModel::load(model_path)?;
    let (manifest, root) = Manifest::load(manifest_path)?;
    let tiles = ctx.config.tiling.to_tile_config();

    let selected: Vec<_> = manifest
        .select(split, variant)
        .filter(|e| e.noisy_path.is_some())
        .collect();
    if selected.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no entries match split {split:?} and variant {variant:?}",
            manifest_path.display()
        )));
    }
    for entry in selected {
        let noisy = read_raw(&root.join(entry.noisy_path.as_ref().expect("filtered")))?;
        let denoised = denoise_image(&model, &noisy, &tiles)?;
        let out_path = ctx.out.join(format!("{}.pgm", entry.id));
        save_raw(&denoised, &out_path)?;
        logging::event(
            "denoised",
            json!({ "id": entry.id, "path": out_path.display().to_string() }),
        );
    }
    Ok(())
}

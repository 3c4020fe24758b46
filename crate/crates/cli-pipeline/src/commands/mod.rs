//! The six pipeline stages and their shared plumbing.

pub mod calibrate;
pub mod denoise;
pub mod evaluate;
pub mod finetune;
pub mod pretrain;
pub mod synthesize;

use std::fs;
use std::path::{Path, PathBuf};

use node_arch::{packed_to_tensor, TrainPair};
use raw_core::{io::load_raw, pack_bayer, RawImage};

use crate::manifest::{Manifest, Split};
use crate::{io_error, CliError};

/// Sorted `*.pgm` files directly inside `dir`.
pub(crate) fn list_pgms(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|r| r.ok().map(|d| d.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    files.sort();
    Ok(files)
}

pub(crate) fn read_raw(path: &Path) -> Result<RawImage, CliError> {
    load_raw(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Loads (noisy, clean) training pairs for one variant of one split.
pub(crate) fn load_pairs(
    manifest: &Manifest,
    root: &Path,
    variant: &str,
    split: Split,
) -> Result<Vec<TrainPair>, CliError> {
    let mut pairs = Vec::new();
    for entry in manifest.select(Some(split), Some(variant)) {
        let (Some(noisy_rel), Some(clean_rel)) = (&entry.noisy_path, &entry.clean_path) else {
            return Err(CliError::Usage(format!(
                "manifest entry {:?} lacks the noisy/clean pair training needs",
                entry.id
            )));
        };
        let noisy = read_raw(&root.join(noisy_rel))?;
        let clean = read_raw(&root.join(clean_rel))?;
        pairs.push(TrainPair::new(
            packed_to_tensor(&pack_bayer(&noisy)),
            packed_to_tensor(&pack_bayer(&clean)),
        )?);
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!(
            "manifest has no {split:?}/{variant} entries to train on"
        )));
    }
    Ok(pairs)
}

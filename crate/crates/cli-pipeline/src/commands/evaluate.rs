//! `evaluate`: score images against their clean references.
//!
//! By default the manifest's own noisy images are scored, which gives the
//! pre-denoising baseline; `--images-dir` points the same machinery at a
//! `denoise` output directory instead. Entries without a clean reference
//! are skipped with a log line. Pairs are scored in parallel but reported
//! in manifest order.

use std::fs;
use std::path::Path;

use noise_lab::DefectiveMask;
use quality_metrics::{evaluate_pair, write_csv_summary, MetricReport};
use rayon::prelude::*;
use serde_json::json;

use crate::commands::read_raw;
use crate::manifest::{Manifest, ManifestEntry, Split};
use crate::{io_error, logging, CliError, Context};

pub fn run(
    ctx: &Context,
    manifest_path: &Path,
    images_dir: Option<&Path>,
    split: Option<Split>,
    variant: Option<&str>,
) -> Result<(), CliError> {
    let (manifest, root) = Manifest::load(manifest_path)?;
    let mut selected = Vec::new();
    for entry in manifest.select(split, variant) {
        if entry.clean_path.is_none() || entry.noisy_path.is_none() {
            logging::event("skipped", json!({ "id": entry.id, "reason": "no clean reference" }));
            continue;
        }
        selected.push(entry);
    }
    if selected.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no entries with clean references match split {split:?} and variant {variant:?}",
            manifest_path.display()
        )));
    }

    let score = |entry: &ManifestEntry| -> Result<(String, MetricReport), CliError> {
        let candidate = match images_dir {
            Some(dir) => read_raw(&dir.join(format!("{}.pgm", entry.id)))?,
            None => read_raw(&root.join(entry.noisy_path.as_ref().expect("selected")))?,
        };
        let reference = read_raw(&root.join(entry.clean_path.as_ref().expect("selected")))?;
        let mask = match &entry.mask_path {
            Some(rel) => DefectiveMask::load(&root.join(rel))?,
            None => DefectiveMask::new_clear(reference.width(), reference.height()),
        };
        let report = evaluate_pair(&candidate, &reference, &mask)?;
        let json_path = ctx.out.join(format!("{}.metrics.json", entry.id));
        fs::write(&json_path, serde_json::to_string_pretty(&report).expect("report serializes"))
            .map_err(|e| io_error(&json_path, e))?;
        Ok((entry.id.clone(), report))
    };
    let rows: Vec<(String, MetricReport)> =
        selected.par_iter().map(|e| score(e)).collect::<Result<_, _>>()?;

    let csv_path = ctx.out.join("summary.csv");
    let mut buffer = Vec::new();
    write_csv_summary(&rows, &mut buffer)?;
    fs::write(&csv_path, buffer).map_err(|e| io_error(&csv_path, e))?;
    logging::event(
        "evaluated",
        json!({ "pairs": rows.len(), "summary": csv_path.display().to_string() }),
    );
    Ok(())
}

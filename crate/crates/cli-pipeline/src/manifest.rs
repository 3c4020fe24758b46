//! Dataset manifests: the handoff contract between pipeline stages.
//!
//! A manifest lists every item of a synthesized dataset with paths relative
//! to its own directory, an exclusive train/test split per entry, and a
//! SHA-256 content hash over all referenced files. The hash pins the data a
//! model was trained on (it is copied into checkpoint provenance), and the
//! manifest is always written last, atomically, so its presence marks a
//! completed synthesis.
//!
//! Synthesized entry ids follow `<scene>.<variant>` with variants `gp`,
//! `defect`, and `mixed`; the training commands select their datasets by
//! that suffix.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{io_error, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Exactly one of `noisy_path` and `burst_dir` is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noisy_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    pub split: Split,
    /// Capture-device tag for per-device splits; unused by the toolkit
    /// itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
}

impl ManifestEntry {
    /// The id's `<scene>.<variant>` suffix, when it follows the convention.
    pub fn variant(&self) -> Option<&str> {
        self.id.rsplit_once('.').map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// SHA-256 over ids, paths, splits, and referenced file bytes; an empty
    /// string opts a hand-written manifest out of verification.
    pub content_hash: String,
}

impl Manifest {
    /// Builds a manifest over `root`, computing the content hash.
    pub fn new(entries: Vec<ManifestEntry>, root: &Path) -> Result<Self, CliError> {
        let mut manifest = Manifest { entries, content_hash: String::new() };
        manifest.check_shape()?;
        manifest.content_hash = manifest.hash_contents(root)?;
        Ok(manifest)
    }

    /// Serializes next to its data, atomically: the manifest appears only
    /// complete, never half-written.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| io_error(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_error(path, e))?;
        Ok(())
    }

    /// Loads and fully validates: unique ids, existing files, and (when the
    /// stored hash is nonempty) unchanged content.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        manifest.check_shape()?;
        manifest.check_files(&root)?;
        if !manifest.content_hash.is_empty() {
            let actual = manifest.hash_contents(&root)?;
            if actual != manifest.content_hash {
                return Err(CliError::Usage(format!(
                    "{}: content hash mismatch; dataset files changed since synthesis",
                    path.display()
                )));
            }
        }
        Ok((manifest, root))
    }

    /// Entries of one split (or both) whose id carries the given variant.
    pub fn select<'a>(
        &'a self,
        split: Option<Split>,
        variant: Option<&'a str>,
    ) -> impl Iterator<Item = &'a ManifestEntry> {
        self.entries.iter().filter(move |e| {
            split.is_none_or(|s| e.split == s) && variant.is_none_or(|v| e.variant() == Some(v))
        })
    }

    fn check_shape(&self) -> Result<(), CliError> {
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.id.as_str()) {
                return Err(CliError::Usage(format!("manifest id {:?} is not unique", entry.id)));
            }
            if entry.noisy_path.is_some() == entry.burst_dir.is_some() {
                return Err(CliError::Usage(format!(
                    "manifest entry {:?} must reference exactly one of noisy_path and burst_dir",
                    entry.id
                )));
            }
        }
        Ok(())
    }

    fn check_files(&self, root: &Path) -> Result<(), CliError> {
        let missing = |path: &Path| {
            CliError::Usage(format!("manifest references missing file {}", path.display()))
        };
        for entry in &self.entries {
            for rel in [&entry.noisy_path, &entry.clean_path, &entry.mask_path].into_iter().flatten() {
                let path = root.join(rel);
                if !path.is_file() {
                    return Err(missing(&path));
                }
            }
            if let Some(dir) = &entry.burst_dir {
                let path = root.join(dir);
                if !path.is_dir() {
                    return Err(missing(&path));
                }
            }
        }
        Ok(())
    }

    /// Hash over every entry's identity and referenced bytes, in entry
    /// order. Paths participate so renames change the hash.
    fn hash_contents(&self, root: &Path) -> Result<String, CliError> {
        fn eat_file(hasher: &mut Sha256, root: &Path, rel: &str) -> Result<(), CliError> {
            let path = root.join(rel);
            hasher.update(rel.as_bytes());
            hasher.update([0]);
            hasher.update(fs::read(&path).map_err(|e| io_error(&path, e))?);
            hasher.update([0]);
            Ok(())
        }
        let mut hasher = Sha256::new();
        for entry in &self.entries {
            hasher.update(entry.id.as_bytes());
            hasher.update([0]);
            hasher.update(match entry.split {
                Split::Train => [b't'],
                Split::Test => [b'e'],
            });
            for rel in [&entry.noisy_path, &entry.clean_path, &entry.mask_path].into_iter().flatten() {
                eat_file(&mut hasher, root, rel)?;
            }
            if let Some(dir) = &entry.burst_dir {
                let path = root.join(dir);
                let mut files: Vec<PathBuf> = fs::read_dir(&path)
                    .map_err(|e| io_error(&path, e))?
                    .filter_map(|r| r.ok().map(|d| d.path()))
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                for file in files {
                    let rel = file.strip_prefix(root).unwrap_or(&file).to_string_lossy().into_owned();
                    eat_file(&mut hasher, root, &rel)?;
                }
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

/// Deterministic per-scene split assignment: scene indices are shuffled by
/// `seed` and the first `round(n * train_fraction)` become training scenes.
/// The rounded cut keeps the realized ratio within one item of exact; when
/// the fraction is strictly below one, at least one scene stays held out.
pub fn assign_splits(count: usize, train_fraction: f64, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut train = (count as f64 * train_fraction).round() as usize;
    if train_fraction < 1.0 {
        train = train.min(count.saturating_sub(1));
    }
    let mut splits = vec![Split::Test; count];
    for &scene in order.iter().take(train) {
        splits[scene] = Split::Train;
    }
    splits
}

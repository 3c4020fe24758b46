//! Raw image persistence: PGM pixel data plus a JSON metadata sidecar.
//!
//! An image stored at `scene.pgm` keeps its metadata at `scene.json`;
//! both files are required. The PGM maxval is the image white level, so
//! 10-bit data is written as big-endian 16-bit samples with maxval 1023.

use std::fs;
use std::path::{Path, PathBuf};

use crate::image::{ImageMeta, RawImage, RawImageError};
use crate::pgm::{self, PgmError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RawIoError {
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("missing metadata sidecar {path}")]
    MissingSidecar { path: PathBuf },
    #[error("{path}: invalid metadata sidecar: {detail}")]
    Sidecar { path: PathBuf, detail: String },
    #[error("{path}: maxval {maxval} does not match bit depth {bit_depth}")]
    MaxvalMismatch {
        path: PathBuf,
        maxval: u16,
        bit_depth: u8,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] RawImageError),
}

/// Path of the JSON sidecar belonging to a PGM file.
pub fn sidecar_path(pgm_path: &Path) -> PathBuf {
    pgm_path.with_extension("json")
}

/// Writes `img` as PGM plus its JSON sidecar.
pub fn save_raw(img: &RawImage, pgm_path: &Path) -> Result<(), RawIoError> {
    pgm::write_pgm(
        pgm_path,
        img.width(),
        img.height(),
        img.meta().white_level(),
        img.data(),
    )?;
    let sidecar = sidecar_path(pgm_path);
    let json = serde_json::to_string_pretty(img.meta()).expect("metadata serializes");
    fs::write(&sidecar, json).map_err(|source| RawIoError::Io {
        path: sidecar,
        source,
    })
}

/// Loads a PGM image and its sidecar, validating that they agree.
pub fn load_raw(pgm_path: &Path) -> Result<RawImage, RawIoError> {
    let sidecar = sidecar_path(pgm_path);
    if !sidecar.exists() {
        return Err(RawIoError::MissingSidecar { path: sidecar });
    }
    let meta_bytes = fs::read(&sidecar).map_err(|source| RawIoError::Io {
        path: sidecar.clone(),
        source,
    })?;
    let meta: ImageMeta =
        serde_json::from_slice(&meta_bytes).map_err(|err| RawIoError::Sidecar {
            path: sidecar,
            detail: err.to_string(),
        })?;
    let pgm = pgm::read_pgm(pgm_path)?;
    if pgm.maxval != meta.white_level() {
        return Err(RawIoError::MaxvalMismatch {
            path: pgm_path.to_path_buf(),
            maxval: pgm.maxval,
            bit_depth: meta.bit_depth,
        });
    }
    Ok(RawImage::new(pgm.width, pgm.height, pgm.samples, meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageMeta;

    #[test]
    fn roundtrips_image_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pgm");
        let mut meta = ImageMeta::default();
        meta.iso = 12800;
        meta.exposure_tag = "1/10s".to_string();
        let data: Vec<u16> = (0..8 * 6).map(|v| (v * 13 % 1024) as u16).collect();
        let img = RawImage::new(8, 6, data, meta).unwrap();
        save_raw(&img, &path).unwrap();
        assert_eq!(load_raw(&path).unwrap(), img);
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pgm");
        let img = RawImage::new(2, 2, vec![0; 4], ImageMeta::default()).unwrap();
        save_raw(&img, &path).unwrap();
        fs::remove_file(sidecar_path(&path)).unwrap();
        match load_raw(&path).unwrap_err() {
            RawIoError::MissingSidecar { path: p } => {
                assert_eq!(p, sidecar_path(&path));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_unknown_sidecar_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pgm");
        let img = RawImage::new(2, 2, vec![0; 4], ImageMeta::default()).unwrap();
        save_raw(&img, &path).unwrap();
        let sidecar = sidecar_path(&path);
        let mut json: serde_json::Value =
            serde_json::from_slice(&fs::read(&sidecar).unwrap()).unwrap();
        json["vendor_blob"] = serde_json::json!("x");
        fs::write(&sidecar, serde_json::to_vec(&json).unwrap()).unwrap();
        assert!(matches!(
            load_raw(&path).unwrap_err(),
            RawIoError::Sidecar { .. }
        ));
    }
}

//! Defective-pixel masks: detection, synthesis and persistence.
//!
//! Detection flags pixel `p` when its burst mean falls outside the
//! model confidence interval centered on a local reference intensity.
//! The reference is the median burst mean over the 5x5 same-channel
//! neighborhood of `p` (mosaic offsets in steps of 2, center excluded,
//! clipped at borders), which stays honest next to other defects
//! because the median ignores a minority of corrupted neighbors.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use raw_core::pgm;
use raw_core::RawImage;

use crate::model::{confidence_bounds, NoiseModel};
use crate::stats::burst_statistics;
use crate::NoiseLabError;

/// Boolean mask over the mosaic; `true` marks a defective photosite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectiveMask {
    pub width: usize,
    pub height: usize,
    pub flags: Vec<bool>,
}

impl DefectiveMask {
    pub fn new_clear(width: usize, height: usize) -> Self {
        DefectiveMask {
            width,
            height,
            flags: vec![false; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.flags[row * self.width + col]
    }

    /// Number of flagged photosites.
    pub fn popcount(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Writes the mask as an 8-bit PGM: 0 = good, 255 = defective.
    pub fn save(&self, path: &Path) -> Result<(), NoiseLabError> {
        let samples: Vec<u16> = self.flags.iter().map(|&f| if f { 255 } else { 0 }).collect();
        pgm::write_pgm(path, self.width, self.height, 255, &samples)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NoiseLabError> {
        let decoded = pgm::read_pgm(path)?;
        let mut flags = Vec::with_capacity(decoded.samples.len());
        for (index, &value) in decoded.samples.iter().enumerate() {
            match value {
                0 => flags.push(false),
                255 => flags.push(true),
                _ => {
                    return Err(NoiseLabError::MaskFormat {
                        path: path.to_path_buf(),
                        index,
                        value,
                    })
                }
            }
        }
        Ok(DefectiveMask {
            width: decoded.width,
            height: decoded.height,
            flags,
        })
    }
}

/// Controls for planting synthetic defects.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefectSynthesisParams {
    /// Fraction of photosites to corrupt, in (0, 1).
    pub density: f64,
    /// Fraction of defects stuck at white level.
    pub hot_fraction: f64,
    /// Fraction of defects stuck at black level.
    pub dead_fraction: f64,
    /// Remaining defects take uniform values strictly between the levels.
    pub seed: u64,
}

impl Default for DefectSynthesisParams {
    fn default() -> Self {
        DefectSynthesisParams {
            density: 0.003,
            hot_fraction: 0.25,
            dead_fraction: 0.25,
            seed: 0,
        }
    }
}

impl DefectSynthesisParams {
    fn validate(&self) -> Result<(), NoiseLabError> {
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(NoiseLabError::Params {
                detail: format!("defect density {} must lie in (0, 1)", self.density),
            });
        }
        if self.hot_fraction < 0.0
            || self.dead_fraction < 0.0
            || self.hot_fraction + self.dead_fraction > 1.0
        {
            return Err(NoiseLabError::Params {
                detail: "hot/dead fractions must be nonnegative and sum to at most 1".to_string(),
            });
        }
        Ok(())
    }
}

/// Plants `round(density * pixels)` defects at distinct random sites.
///
/// Defect values overwrite whatever was there, so composing this after
/// a noise synthesizer leaves defects intact. Returns the corrupted
/// image and the ground-truth mask.
pub fn synthesize_defective(
    clean: &RawImage,
    params: &DefectSynthesisParams,
) -> Result<(RawImage, DefectiveMask), NoiseLabError> {
    params.validate()?;
    let pixels = clean.width() * clean.height();
    let count = (params.density * pixels as f64).round() as usize;
    let n_hot = (params.hot_fraction * count as f64).round() as usize;
    let n_dead = ((params.dead_fraction * count as f64).round() as usize).min(count - n_hot);

    let meta = clean.meta().clone();
    let (black, white) = (meta.black_level, meta.white_level());
    if count > n_hot + n_dead && white - black < 2 {
        return Err(NoiseLabError::Params {
            detail: "uniform defects need room strictly between black and white levels"
                .to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sites = rand::seq::index::sample(&mut rng, pixels, count);

    let mut data = clean.data().to_vec();
    let mut mask = DefectiveMask::new_clear(clean.width(), clean.height());
    for (rank, site) in sites.into_iter().enumerate() {
        // Sites arrive in random order, so assigning kinds by rank is
        // unbiased in position.
        data[site] = if rank < n_hot {
            white
        } else if rank < n_hot + n_dead {
            black
        } else {
            rng.random_range(black + 1..white)
        };
        mask.flags[site] = true;
    }
    let image = RawImage::new(clean.width(), clean.height(), data, meta)?;
    Ok((image, mask))
}

/// Flags pixels whose burst mean escapes the model confidence interval
/// around the local same-channel median reference.
pub fn detect_defective(
    frames: &[RawImage],
    model: &NoiseModel,
) -> Result<DefectiveMask, NoiseLabError> {
    let stats = burst_statistics(frames)?;
    let (w, h) = (stats.width, stats.height);
    let mean = &stats.mean;

    let rows: Vec<Vec<bool>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut neighborhood = [0.0f64; 24];
            let mut row = Vec::with_capacity(w);
            for x in 0..w {
                let mut count = 0;
                for dy in [-4i64, -2, 0, 2, 4] {
                    let ny = y as i64 + dy;
                    if ny < 0 || ny >= h as i64 {
                        continue;
                    }
                    for dx in [-4i64, -2, 0, 2, 4] {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let nx = x as i64 + dx;
                        if nx < 0 || nx >= w as i64 {
                            continue;
                        }
                        neighborhood[count] = mean[ny as usize * w + nx as usize];
                        count += 1;
                    }
                }
                let reference = median(&mut neighborhood[..count])
                    .clamp(model.black_level, model.white_level);
                let (lo, hi) =
                    confidence_bounds(model, reference).expect("reference is clamped in range");
                let value = mean[y * w + x];
                row.push(value < lo || value > hi);
            }
            row
        })
        .collect();

    Ok(DefectiveMask {
        width: w,
        height: h,
        flags: rows.concat(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

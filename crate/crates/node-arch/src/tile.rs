//! Whole-image inference: normalization, padding, and overlap tiling.
//!
//! Networks see packed images scaled to [0, 1] by the white level. Inputs
//! are replicate-padded up to the model's downsampling multiple, and images
//! beyond the untiled budget are processed as overlapping tiles whose
//! contributions are feathered: a linear ramp over the overlap makes the
//! weights of two adjacent tiles sum to one, and the accumulated weight is
//! divided out, so seams blend instead of stepping.

use autograd::Tensor;
use raw_core::{pack_bayer, unpack_bayer, ImageMeta, PackedImage, RawImage};

use crate::config::PACKED_CHANNELS;
use crate::model::NodeModel;
use crate::NodeArchError;

/// Tiling policy for [`denoise_image`] / [`denoise_tensor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileConfig {
    /// Packed images with both sides at most this run in one shot.
    pub max_untiled: usize,
    /// Tile side, in packed pixels; a multiple of the downsampling factor.
    pub tile: usize,
    /// Feathered overlap between adjacent tiles, in packed pixels.
    pub overlap: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig { max_untiled: 256, tile: 192, overlap: 32 }
    }
}

impl TileConfig {
    fn validate(&self, downsample: usize) -> Result<(), NodeArchError> {
        let fail = |detail: String| Err(NodeArchError::Config { detail });
        if self.tile == 0 || self.tile % downsample != 0 {
            return fail(format!(
                "tile {} must be a nonzero multiple of the downsampling factor {downsample}",
                self.tile
            ));
        }
        if self.overlap == 0 || self.overlap >= self.tile {
            return fail(format!("overlap {} must lie in 1..tile ({})", self.overlap, self.tile));
        }
        Ok(())
    }
}

/// Packed DNs scaled by the white level into a `[1, 4, H, W]` tensor.
pub fn packed_to_tensor(img: &PackedImage) -> Tensor {
    let (w, h) = (img.width(), img.height());
    let scale = 1.0 / f64::from(img.meta().white_level());
    let mut data = Vec::with_capacity(PACKED_CHANNELS * h * w);
    for plane in img.planes() {
        data.extend(plane.iter().map(|&v| f64::from(v) * scale));
    }
    Tensor::from_vec([1, PACKED_CHANNELS, h, w], data).expect("plane-sized buffer")
}

/// Inverse of [`packed_to_tensor`]: clamp to [0, 1], scale to DNs, round.
pub fn tensor_to_packed(t: &Tensor, meta: &ImageMeta) -> Result<PackedImage, NodeArchError> {
    let [n, c, h, w] = t.shape();
    if n != 1 || c != PACKED_CHANNELS {
        return Err(NodeArchError::Input {
            detail: format!("packed tensors are [1, 4, H, W], got {:?}", t.shape()),
        });
    }
    let white = f64::from(meta.white_level());
    let plane = |c: usize| {
        t.data()[c * h * w..(c + 1) * h * w]
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * white).round() as u16)
            .collect::<Vec<u16>>()
    };
    Ok(PackedImage::new(w, h, [plane(0), plane(1), plane(2), plane(3)], meta.clone())?)
}

/// Replicate-pads on the bottom/right to multiples of `multiple`.
fn pad_to_multiple(t: &Tensor, multiple: usize) -> Tensor {
    let [n, c, h, w] = t.shape();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if ph == h && pw == w {
        return t.clone();
    }
    let mut out = Tensor::zeros([n, c, ph, pw]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..ph {
                let sy = y.min(h - 1);
                for x in 0..pw {
                    out.set(ni, ci, y, x, t.at(ni, ci, sy, x.min(w - 1)));
                }
            }
        }
    }
    out
}

fn crop(t: &Tensor, h: usize, w: usize) -> Tensor {
    let [n, c, th, tw] = t.shape();
    if th == h && tw == w {
        return t.clone();
    }
    let mut out = Tensor::zeros([n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set(ni, ci, y, x, t.at(ni, ci, y, x));
                }
            }
        }
    }
    out
}

fn slice(t: &Tensor, oy: usize, ox: usize, h: usize, w: usize) -> Tensor {
    let [n, c, _, _] = t.shape();
    let mut out = Tensor::zeros([n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set(ni, ci, y, x, t.at(ni, ci, oy + y, ox + x));
                }
            }
        }
    }
    out
}

/// Pads, runs the full decomposition, crops back.
fn forward_padded(model: &NodeModel, y: &Tensor, multiple: usize) -> Result<Tensor, NodeArchError> {
    let [_, _, h, w] = y.shape();
    let padded = pad_to_multiple(y, multiple);
    let (_, _, denoised) = model.node_forward(&padded)?;
    Ok(crop(&denoised, h, w))
}

/// Tile origins along one axis: stride `tile - overlap`, final tile flush
/// with the end.
fn tile_origins(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut origins: Vec<usize> = (0..).map(|k| k * stride).take_while(|o| o + tile < len).collect();
    origins.push(len - tile);
    origins
}

/// Feather weight of position `i` in a tile of length `span`: ramps from
/// 1/(overlap+1) up to 1 on any edge that faces a neighboring tile.
fn feather(i: usize, span: usize, ramp_lo: bool, ramp_hi: bool, overlap: usize) -> f64 {
    let denom = (overlap + 1) as f64;
    let mut w: f64 = 1.0;
    if ramp_lo {
        w = w.min((i + 1) as f64 / denom);
    }
    if ramp_hi {
        w = w.min((span - i) as f64 / denom);
    }
    w
}

/// Denoises a normalized `[1, 4, H, W]` tensor, tiling if it exceeds the
/// untiled budget.
pub fn denoise_tensor(
    model: &NodeModel,
    y: &Tensor,
    tiles: &TileConfig,
) -> Result<Tensor, NodeArchError> {
    let ds = model.downsample_factor();
    tiles.validate(ds)?;
    let [n, c, h, w] = y.shape();
    if n != 1 || c != PACKED_CHANNELS {
        return Err(NodeArchError::Input {
            detail: format!("denoising expects [1, 4, H, W], got {:?}", y.shape()),
        });
    }
    if h <= tiles.max_untiled && w <= tiles.max_untiled {
        return forward_padded(model, y, ds);
    }

    let mut acc = vec![0.0f64; PACKED_CHANNELS * h * w];
    let mut weight = vec![0.0f64; h * w];
    for &oy in &tile_origins(h, tiles.tile, tiles.overlap) {
        let th = tiles.tile.min(h);
        for &ox in &tile_origins(w, tiles.tile, tiles.overlap) {
            let tw = tiles.tile.min(w);
            let den = forward_padded(model, &slice(y, oy, ox, th, tw), ds)?;
            for ty in 0..th {
                let wy = feather(ty, th, oy > 0, oy + th < h, tiles.overlap);
                for tx in 0..tw {
                    let wx = feather(tx, tw, ox > 0, ox + tw < w, tiles.overlap);
                    let wgt = wy * wx;
                    let at = (oy + ty) * w + (ox + tx);
                    weight[at] += wgt;
                    for ci in 0..PACKED_CHANNELS {
                        acc[ci * h * w + at] += wgt * den.at(0, ci, ty, tx);
                    }
                }
            }
        }
    }
    for ci in 0..PACKED_CHANNELS {
        for (i, &wgt) in weight.iter().enumerate() {
            acc[ci * h * w + i] /= wgt;
        }
    }
    Ok(Tensor::from_vec([1, PACKED_CHANNELS, h, w], acc).expect("accumulator sized to output"))
}

/// End-to-end raw-domain denoising: pack, normalize, run (tiled if large),
/// clamp to the DN range, round, unpack. Output dims equal input dims.
pub fn denoise_image(
    model: &NodeModel,
    raw: &RawImage,
    tiles: &TileConfig,
) -> Result<RawImage, NodeArchError> {
    let packed = pack_bayer(raw);
    let denoised = denoise_tensor(model, &packed_to_tensor(&packed), tiles)?;
    Ok(unpack_bayer(&tensor_to_packed(&denoised, packed.meta())?))
}

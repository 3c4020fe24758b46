//! Raw mosaic and packed-plane image types.
//!
//! Packing follows the RGGB quad layout: within every 2x2 tile of the
//! mosaic, R sits at (even row, even col), G1 at (even, odd), G2 at
//! (odd, even) and B at (odd, odd). The packed representation keeps the
//! four sites as separate half-resolution planes in the fixed order
//! `[R, G1, G2, B]`, so plane index encodes the CFA phase.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Color filter array layout of the mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfaPattern {
    #[serde(rename = "RGGB")]
    Rggb,
}

/// The four packed Bayer planes, in plane-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayerChannel {
    R = 0,
    G1 = 1,
    G2 = 2,
    B = 3,
}

impl BayerChannel {
    pub const ALL: [BayerChannel; 4] = [
        BayerChannel::R,
        BayerChannel::G1,
        BayerChannel::G2,
        BayerChannel::B,
    ];

    /// (row offset, col offset) of this channel inside a 2x2 RGGB tile.
    pub fn offsets(self) -> (usize, usize) {
        match self {
            BayerChannel::R => (0, 0),
            BayerChannel::G1 => (0, 1),
            BayerChannel::G2 => (1, 0),
            BayerChannel::B => (1, 1),
        }
    }
}

/// Sensor metadata carried alongside pixel data, persisted as the JSON
/// sidecar of every image file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageMeta {
    pub cfa: CfaPattern,
    pub bit_depth: u8,
    pub black_level: u16,
    pub iso: u32,
    pub exposure_tag: String,
}

impl ImageMeta {
    /// Saturation value: all samples lie in `[0, white_level]`.
    pub fn white_level(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    fn validate(&self) -> Result<(), RawImageError> {
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return Err(RawImageError::BitDepth {
                bit_depth: self.bit_depth,
            });
        }
        if self.black_level >= self.white_level() {
            return Err(RawImageError::BlackLevel {
                black_level: self.black_level,
                white_level: self.white_level(),
            });
        }
        Ok(())
    }
}

impl Default for ImageMeta {
    fn default() -> Self {
        ImageMeta {
            cfa: CfaPattern::Rggb,
            bit_depth: 10,
            black_level: 64,
            iso: 1600,
            exposure_tag: String::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RawImageError {
    #[error("image dimensions {width}x{height} must be even and nonzero")]
    Dimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} samples, dimensions require {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("sample {value} at index {index} exceeds white level {white_level}")]
    SampleOutOfRange {
        index: usize,
        value: u16,
        white_level: u16,
    },
    #[error("bit depth {bit_depth} outside supported range 1..=16")]
    BitDepth { bit_depth: u8 },
    #[error("black level {black_level} must lie below white level {white_level}")]
    BlackLevel { black_level: u16, white_level: u16 },
}

/// A single mosaiced sensor readout.
///
/// Dimensions are even so the image is a whole grid of 2x2 CFA tiles,
/// and every sample lies in `[0, white_level]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<u16>,
    meta: ImageMeta,
}

impl RawImage {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<u16>,
        meta: ImageMeta,
    ) -> Result<Self, RawImageError> {
        meta.validate()?;
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(RawImageError::Dimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RawImageError::DataLength {
                expected: width * height,
                actual: data.len(),
            });
        }
        let white = meta.white_level();
        for (index, &value) in data.iter().enumerate() {
            if value > white {
                return Err(RawImageError::SampleOutOfRange {
                    index,
                    value,
                    white_level: white,
                });
            }
        }
        Ok(RawImage {
            width,
            height,
            data,
            meta,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.meta
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    /// Consumes the image, returning the sample buffer.
    pub fn into_data(self) -> Vec<u16> {
        self.data
    }
}

/// Four half-resolution Bayer planes plus the provenance of their source.
///
/// `width` and `height` are packed-domain (half-mosaic) dimensions; each
/// plane holds `width * height` samples row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedImage {
    width: usize,
    height: usize,
    planes: [Vec<u16>; 4],
    meta: ImageMeta,
}

impl PackedImage {
    pub fn new(
        width: usize,
        height: usize,
        planes: [Vec<u16>; 4],
        meta: ImageMeta,
    ) -> Result<Self, RawImageError> {
        meta.validate()?;
        if width == 0 || height == 0 {
            return Err(RawImageError::Dimensions { width, height });
        }
        let white = meta.white_level();
        for plane in &planes {
            if plane.len() != width * height {
                return Err(RawImageError::DataLength {
                    expected: width * height,
                    actual: plane.len(),
                });
            }
            for (index, &value) in plane.iter().enumerate() {
                if value > white {
                    return Err(RawImageError::SampleOutOfRange {
                        index,
                        value,
                        white_level: white,
                    });
                }
            }
        }
        Ok(PackedImage {
            width,
            height,
            planes,
            meta,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, channel: BayerChannel) -> &[u16] {
        &self.planes[channel as usize]
    }

    pub fn planes(&self) -> &[Vec<u16>; 4] {
        &self.planes
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.meta
    }
}

/// Splits a mosaic into the four packed planes `[R, G1, G2, B]`.
pub fn pack_bayer(img: &RawImage) -> PackedImage {
    let (hw, hh) = (img.width / 2, img.height / 2);
    let mut planes: [Vec<u16>; 4] = std::array::from_fn(|_| vec![0u16; hw * hh]);
    for (c, channel) in BayerChannel::ALL.iter().enumerate() {
        let (dy, dx) = channel.offsets();
        let plane = &mut planes[c];
        for y in 0..hh {
            let src_row = (2 * y + dy) * img.width;
            let dst_row = y * hw;
            for x in 0..hw {
                plane[dst_row + x] = img.data[src_row + 2 * x + dx];
            }
        }
    }
    PackedImage {
        width: hw,
        height: hh,
        planes,
        meta: img.meta.clone(),
    }
}

/// Reassembles the mosaic from packed planes; exact inverse of [`pack_bayer`].
pub fn unpack_bayer(packed: &PackedImage) -> RawImage {
    let (w, h) = (packed.width * 2, packed.height * 2);
    let mut data = vec![0u16; w * h];
    for (c, channel) in BayerChannel::ALL.iter().enumerate() {
        let (dy, dx) = channel.offsets();
        let plane = &packed.planes[c];
        for y in 0..packed.height {
            let src_row = y * packed.width;
            let dst_row = (2 * y + dy) * w;
            for x in 0..packed.width {
                data[dst_row + 2 * x + dx] = plane[src_row + x];
            }
        }
    }
    RawImage {
        width: w,
        height: h,
        data,
        meta: packed.meta.clone(),
    }
}

//! Containers and plumbing for raw Bayer sensor data.
//!
//! A [`RawImage`] is a single mosaiced readout: one scalar per photosite,
//! stored row-major together with the sensor metadata needed to interpret
//! it (CFA layout, bit depth, black level). [`pack_bayer`] rearranges the
//! mosaic into four half-resolution color planes so that every plane is
//! spatially uniform, which is the domain the denoising networks and the
//! patch pipeline operate in. [`unpack_bayer`] is its exact inverse.
//!
//! Images are persisted as binary PGM (P5) next to a small JSON sidecar
//! carrying the metadata; see [`io`].

mod image;
mod patch;

pub mod io;
pub mod pgm;

pub use image::{
    pack_bayer, unpack_bayer, BayerChannel, CfaPattern, ImageMeta, PackedImage, RawImage,
    RawImageError,
};
pub use patch::{augment, extract_patches, FlipMode, PatchError, PatchPlan, PatchSpec};

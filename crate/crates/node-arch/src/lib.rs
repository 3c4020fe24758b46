//! The noise-decomposition denoiser.
//!
//! A noisy packed raw image `y` is modeled as clean signal plus two additive
//! noise components: a Gaussian+Poisson part and a defective-pixel part. Two
//! sub-networks each regress the *complement* of their component, so the
//! component itself falls out of a wired subtraction `y - subnet(y)` rather
//! than being learned directly. A third network takes the 12-channel stack
//! [y, gp estimate, dp estimate] and produces the denoised 4-channel image.
//!
//! All three networks share one U-shaped grammar (conv/leaky-ReLU encoder
//! with space-to-depth and max-pool downsampling, transposed-conv decoder,
//! skip concatenations), differing only in configuration. Training is Adam
//! on L1 loss with per-step RNG streams, so a run can be resumed from a
//! checkpoint bit-exactly.

mod config;
mod model;
mod net;
mod tile;
mod train;

pub use config::{
    DenoiserConfig, SubnetConfig, TrainConfig, WiringConfig, NEGATIVE_SLOPE, PACKED_CHANNELS,
};
pub use model::{NodeModel, Provenance, TrainState, MODEL_FORMAT};
pub use net::{build_denoiser, build_subnetwork, Network};
pub use tile::{denoise_image, denoise_tensor, packed_to_tensor, tensor_to_packed, TileConfig};
pub use train::{
    finetune_node, pretrain_subnetwork, sample_batch, FinetuneOptions, StepRecord, TrainPair,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NodeArchError {
    #[error("invalid configuration: {detail}")]
    Config { detail: String },
    #[error("invalid input: {detail}")]
    Input { detail: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("model file does not match this architecture: {detail}")]
    Model { detail: String },
    #[error(transparent)]
    Checkpoint(#[from] autograd::CheckpointError),
    #[error(transparent)]
    Autograd(#[from] autograd::AutogradError),
    #[error(transparent)]
    Image(#[from] raw_core::RawImageError),
}

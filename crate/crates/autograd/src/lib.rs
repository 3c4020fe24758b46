//! Reverse-mode automatic differentiation for the handful of layers the
//! denoising networks need.
//!
//! The engine is a define-by-run tape: a [`Graph`] owns every tensor produced
//! during a forward pass, operations append nodes and return [`Var`] handles,
//! and [`Graph::backward`] sweeps the tape once in reverse creation order.
//! That order is always topological because an operation can only consume
//! handles that already exist. Gradients accumulate additively across fan-out.
//!
//! Everything runs in double precision, and the oracle for every backward
//! rule is a central finite difference; [`grad_check`] packages that
//! comparison both for the test suite and for callers assembling new
//! architectures.
//!
//! Kernels are written so results are bit-identical regardless of thread
//! count: parallel loops split output buffers into disjoint per-plane chunks,
//! and every reduction uses an accumulation order baked into the code rather
//! than a scheduler-dependent one.

mod check;
mod checkpoint;
mod conv;
mod graph;
mod init;
mod ops;
mod optim;
mod tensor;

pub use check::{grad_check, CheckedInput, GradCheckEntry, GradCheckReport, FD_STEP};
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::Padding;
pub use graph::{Graph, Var};
pub use init::he_normal;
pub use optim::{adam_step, AdamParams, AdamState};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised while building or differentiating a graph.
#[derive(Debug, Error)]
pub enum AutogradError {
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("invalid argument: {detail}")]
    InvalidArg { detail: String },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: [usize; 4] },
    #[error("backward target must be a scalar, got {shape:?}")]
    NotScalar { shape: [usize; 4] },
}

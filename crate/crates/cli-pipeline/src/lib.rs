//! Command-line orchestration of the denoising workflow.
//!
//! The `node-pipeline` binary chains six stages, each reading the previous
//! stage's artifacts from disk: `calibrate` fits the sensor noise model from
//! a burst, `synthesize` corrupts clean images into the three training
//! datasets, `pretrain` teaches each noise branch on its single-noise data,
//! `finetune` trains the assembled model end to end, `denoise` runs it over
//! a dataset split, and `evaluate` scores the results against their clean
//! references.
//!
//! Conventions shared by every stage: artifacts go only to `--out`,
//! diagnostics go to stderr as JSON lines, and all randomness derives from
//! one global seed through [`seed::stage_seed`]. Exit codes are stable:
//! 0 success, 2 bad invocation or bad inputs, 3 incompatible or damaged
//! prior-stage artifacts.

pub mod commands;
pub mod config;
pub mod logging;
pub mod manifest;
pub mod sample;
pub mod seed;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::PipelineConfig;

/// Stage failures, split by who has to fix them.
#[derive(Debug, Error)]
pub enum CliError {
    /// The invocation or its input data is wrong; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A prior stage's artifact is missing, damaged, or built for a
    /// different architecture; exit code 3.
    #[error("{0}")]
    State(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::State(_) => 3,
        }
    }
}

impl From<node_arch::NodeArchError> for CliError {
    fn from(e: node_arch::NodeArchError) -> Self {
        match e {
            // Checkpoint trouble means a prior stage's output cannot be
            // consumed; everything else is bad input to this stage.
            node_arch::NodeArchError::Model { .. } | node_arch::NodeArchError::Checkpoint(_) => {
                CliError::State(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<noise_lab::NoiseLabError> for CliError {
    fn from(e: noise_lab::NoiseLabError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<quality_metrics::MetricsError> for CliError {
    fn from(e: quality_metrics::MetricsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<raw_core::io::RawIoError> for CliError {
    fn from(e: raw_core::io::RawIoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Wraps an I/O error with the path it happened on.
pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub config: PipelineConfig,
    /// Global seed after the `--seed` override, before stage fan-out.
    pub seed: u64,
    pub out: PathBuf,
}

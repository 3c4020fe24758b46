//! Single-file binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "NODEckpt"
//! version   u32
//! head_len  u64      byte length of the JSON header
//! header    head_len bytes of JSON: {"arch": ..., "tensors": [...]}
//! payload   raw f64 little-endian tensor data, manifest order
//! ```
//!
//! The header's `tensors` array is the manifest: name, shape, dtype per
//! entry, in payload order. `arch` is an opaque JSON value owned by the
//! caller (architecture config, training provenance, optimizer scalars).
//! Optimizer moment vectors ride along as ordinary tensors under
//! caller-chosen names, so one container resumes training exactly.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NODEckpt";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad magic")]
    Magic,
    #[error("unsupported checkpoint version {found}")]
    Version { found: u32 },
    #[error("malformed checkpoint header: {detail}")]
    Header { detail: String },
    #[error("tensor {name} has unsupported dtype {dtype}")]
    Dtype { name: String, dtype: String },
    #[error("duplicate tensor name {name}")]
    Duplicate { name: String },
    #[error("checkpoint payload truncated")]
    Truncated,
    #[error("checkpoint has trailing bytes after payload")]
    Trailing,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: serde_json::Value,
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: [usize; 4],
    dtype: String,
}

/// An ordered set of named tensors plus one free-form JSON value.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(arch: serde_json::Value) -> Self {
        Self { arch, tensors: Vec::new() }
    }

    /// Appends a tensor; names must be unique within the container.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), CheckpointError> {
        let name = name.into();
        if self.tensors.iter().any(|(n, _)| *n == name) {
            return Err(CheckpointError::Duplicate { name });
        }
        self.tensors.push((name, tensor));
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let header = Header {
            arch: self.arch.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| ManifestEntry {
                    name: name.clone(),
                    shape: t.shape(),
                    dtype: "f64".into(),
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| CheckpointError::Header { detail: e.to_string() })?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        out.write_all(&header_bytes)?;
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        read_or_truncated(&mut input, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Magic);
        }
        let mut word = [0u8; 4];
        read_or_truncated(&mut input, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let mut long = [0u8; 8];
        read_or_truncated(&mut input, &mut long)?;
        let header_len = u64::from_le_bytes(long) as usize;
        let mut header_bytes = vec![0u8; header_len];
        read_or_truncated(&mut input, &mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| CheckpointError::Header { detail: e.to_string() })?;

        let mut seen = std::collections::HashSet::new();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            if entry.dtype != "f64" {
                return Err(CheckpointError::Dtype {
                    name: entry.name.clone(),
                    dtype: entry.dtype.clone(),
                });
            }
            if !seen.insert(entry.name.clone()) {
                return Err(CheckpointError::Duplicate { name: entry.name.clone() });
            }
            let numel: usize = entry.shape.iter().product();
            if numel == 0 {
                return Err(CheckpointError::Header {
                    detail: format!("tensor {} has a zero dimension", entry.name),
                });
            }
            let mut bytes = vec![0u8; numel * 8];
            read_or_truncated(&mut input, &mut bytes)?;
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk is 8 bytes")))
                .collect();
            let tensor = Tensor::from_vec(entry.shape, data)
                .map_err(|e| CheckpointError::Header { detail: e.to_string() })?;
            tensors.push((entry.name.clone(), tensor));
        }
        let mut probe = [0u8; 1];
        if input.read(&mut probe)? != 0 {
            return Err(CheckpointError::Trailing);
        }
        Ok(Self { arch: header.arch, tensors })
    }
}

fn read_or_truncated(r: &mut impl Read, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            CheckpointError::Truncated
        } else {
            CheckpointError::Io(e)
        }
    })
}

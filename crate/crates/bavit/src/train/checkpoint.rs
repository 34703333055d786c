//! Checkpoint container: everything needed to resume training exactly.
//!
//! Layout on disk:
//!
//! ```text
//! "BAVT"                      4-byte magic
//! version       u32 LE        currently 1
//! header_len    u32 LE        byte length of the JSON header
//! header        JSON          config, tensor manifest, optimizer, schedule
//! payload       f32 LE        params, Adam m, Adam v — canonical order
//! ```
//!
//! The header carries a CRC-32 of the payload, so a flipped bit anywhere in
//! the weight data is caught at load time. Tensor names, shapes, and offsets
//! are validated against the layout the config implies; a checkpoint written
//! by a differently shaped model is rejected rather than misread.

use super::{Adam, AdamConfig, LrSchedule};
use crate::grid::PatchGrid;
use crate::linalg::Real;
use crate::net::{tensor_specs, BavitModel, ModelConfig, ModelError, Params};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"BAVT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: magic {found:?} where {MAGIC:?} was expected")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("file too short: {0} bytes")]
    Truncated(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tensor manifest mismatch at `{tensor}`: {detail}")]
    ManifestMismatch { tensor: String, detail: String },
    #[error("payload holds {found} elements, config implies {expected}")]
    PayloadLength { expected: u64, found: u64 },
    #[error("payload CRC-32 {found:#010x} does not match header {expected:#010x}")]
    CrcMismatch { expected: u32, found: u32 },
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ConfigHeader {
    image_width: u32,
    image_height: u32,
    patch_size: u32,
    embed_dim: usize,
    depth: usize,
    heads: usize,
    mlp_ratio: usize,
}

impl ConfigHeader {
    fn of(cfg: &ModelConfig) -> Self {
        Self {
            image_width: cfg.grid.image_width,
            image_height: cfg.grid.image_height,
            patch_size: cfg.grid.patch_size,
            embed_dim: cfg.embed_dim,
            depth: cfg.depth,
            heads: cfg.heads,
            mlp_ratio: cfg.mlp_ratio,
        }
    }

    fn to_config(&self) -> Result<ModelConfig, ModelError> {
        let grid = PatchGrid::new(self.image_width, self.image_height, self.patch_size)?;
        ModelConfig::new(grid, self.embed_dim, self.depth, self.heads, self.mlp_ratio)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
    /// Element offset inside the parameter section; the Adam sections
    /// repeat the identical layout.
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimHeader {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ConfigHeader,
    tensors: Vec<TensorHeader>,
    optimizer: OptimHeader,
    schedule: LrSchedule,
    epoch: usize,
    payload_elems: u64,
    payload_crc32: u32,
}

/// Everything a [`super::Trainer`] needs to pick up where a run left off.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: BavitModel<f32>,
    pub adam: Adam<f32>,
    pub schedule: LrSchedule,
    pub epoch: usize,
}

fn manifest(cfg: &ModelConfig) -> Vec<TensorHeader> {
    let mut offset = 0u64;
    tensor_specs(cfg)
        .into_iter()
        .map(|spec| {
            let len = spec.len() as u64;
            let h = TensorHeader {
                name: spec.name,
                shape: spec.shape,
                offset,
                len,
            };
            offset += len;
            h
        })
        .collect()
}

fn push_section<F: Real>(payload: &mut Vec<u8>, params: &Params<F>) {
    for t in params.tensors() {
        for &v in t {
            payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
}

/// Serializes model weights and optimizer state to `path`. `epoch` is the
/// next epoch a resumed run should execute.
pub fn save_checkpoint<F: Real>(
    path: &Path,
    model: &BavitModel<F>,
    adam: &Adam<F>,
    schedule: &LrSchedule,
    epoch: usize,
) -> Result<(), CheckpointError> {
    let n = model.num_params();
    let (m, v, step) = adam.state();
    let mut payload = Vec::with_capacity(3 * n * 4);
    push_section(&mut payload, &model.params);
    push_section(&mut payload, m);
    push_section(&mut payload, v);
    let header = Header {
        config: ConfigHeader::of(&model.cfg),
        tensors: manifest(&model.cfg),
        optimizer: OptimHeader {
            beta1: adam.cfg.beta1,
            beta2: adam.cfg.beta2,
            eps: adam.cfg.eps,
            step,
        },
        schedule: *schedule,
        epoch,
        payload_elems: (3 * n) as u64,
        payload_crc32: crc32fast::hash(&payload),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + header_bytes.len() + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

fn read_section(payload: &[u8], start_elem: usize, params: &mut Params<f32>) {
    let mut i = start_elem;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            let b = [
                payload[i * 4],
                payload[i * 4 + 1],
                payload[i * 4 + 2],
                payload[i * 4 + 3],
            ];
            *v = f32::from_le_bytes(b);
            i += 1;
        }
    }
}

/// Reads, validates, and reconstructs a checkpoint written by
/// [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let found: [u8; 4] = bytes[0..4].try_into().unwrap();
    if found != MAGIC {
        return Err(CheckpointError::BadMagic { found });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12 + header_len;
    if bytes.len() < payload_start {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let cfg = header.config.to_config()?;

    let expected = manifest(&cfg);
    if header.tensors.len() != expected.len() {
        return Err(CheckpointError::ManifestMismatch {
            tensor: String::from("<count>"),
            detail: format!(
                "{} tensors listed, layout has {}",
                header.tensors.len(),
                expected.len()
            ),
        });
    }
    for (got, want) in header.tensors.iter().zip(&expected) {
        if got.name != want.name || got.shape != want.shape {
            return Err(CheckpointError::ManifestMismatch {
                tensor: got.name.clone(),
                detail: format!(
                    "{:?} named `{}` where `{}` {:?} belongs",
                    got.shape, got.name, want.name, want.shape
                ),
            });
        }
        if got.offset != want.offset || got.len != want.len {
            return Err(CheckpointError::ManifestMismatch {
                tensor: got.name.clone(),
                detail: format!(
                    "offset/len {}/{} where {}/{} belongs",
                    got.offset, got.len, want.offset, want.len
                ),
            });
        }
    }

    let n = crate::net::count_params(&cfg);
    let payload = &bytes[payload_start..];
    let elems = payload.len() / 4;
    if payload.len() % 4 != 0 || elems as u64 != header.payload_elems || elems != 3 * n {
        return Err(CheckpointError::PayloadLength {
            expected: (3 * n) as u64,
            found: elems as u64,
        });
    }
    let crc = crc32fast::hash(payload);
    if crc != header.payload_crc32 {
        return Err(CheckpointError::CrcMismatch {
            expected: header.payload_crc32,
            found: crc,
        });
    }

    let mut model = BavitModel::<f32>::zeros(cfg);
    let mut m = Params::<f32>::zeros(&cfg);
    let mut v = Params::<f32>::zeros(&cfg);
    read_section(payload, 0, &mut model.params);
    read_section(payload, n, &mut m);
    read_section(payload, 2 * n, &mut v);
    let adam = Adam::restore(
        &cfg,
        AdamConfig {
            beta1: header.optimizer.beta1,
            beta2: header.optimizer.beta2,
            eps: header.optimizer.eps,
        },
        m,
        v,
        header.optimizer.step,
    );
    Ok(Checkpoint {
        model,
        adam,
        schedule: header.schedule,
        epoch: header.epoch,
    })
}

//! Checkpoint layout: `u64` LE header length, UTF-8 JSON header, then every
//! tensor in declaration order as little-endian `f32`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, ModelParams};
use crate::error::{Error, Result};

const FORMAT: &str = "patchmark-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub arch: ArchConfig,
    pub points: usize,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    /// Free-form training metadata (epoch, losses, fold).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Serializes parameters to bytes.
pub fn encode_checkpoint(params: &ModelParams<f32>, seed: u64, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        arch: params.arch.clone(),
        points: params.points,
        seed,
        tensors: params
            .layout()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * params.parameter_count());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams<f32>, CheckpointHeader)> {
    let bad = |reason: &str| Error::format("checkpoint", reason);
    if bytes.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(8..8usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(&format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut params = ModelParams::<f32>::zeros(&header.arch, header.points)?;
    let layout = params.layout();
    let declared: Vec<(String, Vec<usize>)> = header.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    if layout != declared {
        return Err(bad("tensor table does not match architecture"));
    }
    let mut data = &bytes[8 + len..];
    if data.len() != 4 * params.parameter_count() {
        return Err(bad(&format!(
            "expected {} bytes of tensor data, found {}",
            4 * params.parameter_count(),
            data.len()
        )));
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f32::from_le_bytes(data[..4].try_into().expect("4 bytes"));
            data = &data[4..];
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok((params, header))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams<f32>,
    seed: u64,
    metadata: serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params, seed, metadata)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

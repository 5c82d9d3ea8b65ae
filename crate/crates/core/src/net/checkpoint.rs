//! Checkpoint files: `b"SITH"`, `u32` version, `u32` length + config JSON,
//! `u64` parameter count, then `f32` little-endian parameters.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::model::{Model, NetworkConfig};

pub const MAGIC: &[u8; 4] = b"SITH";
pub const VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let json = serde_json::to_vec(&model.config).expect("config serializes");
    let mut out = Vec::with_capacity(20 + json.len() + model.params.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params.data.len() as u64).to_le_bytes());
    for v in &model.params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a checkpoint; with `expected`, a differing stored config is an error.
pub fn model_from_bytes(bytes: &[u8], expected: Option<&NetworkConfig>) -> Result<Model> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let jlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json = bytes.get(12..12 + jlen).ok_or_else(|| bad("truncated config"))?;
    let config: NetworkConfig = serde_json::from_slice(json)?;
    if let Some(exp) = expected {
        if exp != &config {
            return Err(bad("network config mismatch between checkpoint and run config"));
        }
    }
    let mut pos = 12 + jlen;
    let count = u64::from_le_bytes(
        bytes
            .get(pos..pos + 8)
            .ok_or_else(|| bad("truncated header"))?
            .try_into()
            .unwrap(),
    ) as usize;
    pos += 8;
    let mut model = Model::architecture(&config)?;
    if count != model.params.data.len() {
        return Err(bad(&format!(
            "{count} parameters stored, architecture needs {}",
            model.params.data.len()
        )));
    }
    let payload = bytes.get(pos..pos + count * 4).ok_or_else(|| bad("truncated parameters"))?;
    if payload.len() + pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    for (dst, b) in model.params.data.iter_mut().zip(payload.chunks_exact(4)) {
        *dst = f32::from_le_bytes(b.try_into().unwrap());
    }
    model.params.validate()?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&NetworkConfig>) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, expected)
}

//! Binary model checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"FSSEGNET"
//! 8       4     u32    format version (1)
//! 12      4     u32    input_side
//! 16      4     u32    base_channels
//! 20      4     u32    depth
//! 24      4     u32    classes
//! 28      8     u64    seed
//! 36      8     u64    parameter count N
//! 44      8*N   f64    parameters, layer by layer (kernel then bias)
//! ```

use std::path::Path;

use super::model::{SegConfig, SegModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FSSEGNET";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

pub fn encode(model: &SegModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.input_side, c.base_channels, c.depth, c.classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SegModel> {
    let err = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(err("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(err("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = SegConfig {
        input_side: u32_at(12) as usize,
        base_channels: u32_at(16) as usize,
        depth: u32_at(20) as usize,
        classes: u32_at(24) as usize,
        seed: u64_at(28),
    };
    let count = u64_at(36) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count.saturating_mul(8) {
        return Err(Error::Checkpoint(format!("payload is {} bytes, header promises {count} parameters", payload.len())));
    }
    let params = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    SegModel::from_params(config, params)
}

pub fn save(model: &SegModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<SegModel> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

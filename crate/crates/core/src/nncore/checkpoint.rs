//! Self-describing network checkpoints.
//!
//! Layout, all little-endian: magic `XSEINN01`, u32 format version,
//! u32 header length, JSON header (input shape + layer specs), u64
//! parameter count, parameters as f64, and a trailing u64 FNV-1a checksum
//! over every preceding byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network, NnError};
use crate::seed::fnv1a64;

const MAGIC: &[u8; 8] = b"XSEINN01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    input_channels: usize,
    input_length: usize,
    specs: Vec<LayerSpec>,
}

/// Serialize a network to bytes.
pub fn to_bytes(net: &Network) -> Result<Vec<u8>, NnError> {
    let (channels, length) = net.input_shape();
    let header = Header {
        input_channels: channels,
        input_length: length,
        specs: net.specs().to_vec(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;

    let mut out = Vec::with_capacity(24 + header_json.len() + net.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for &p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let checksum = fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

/// Deserialize a network from bytes, verifying structure and checksum.
pub fn from_bytes(bytes: &[u8]) -> Result<Network, NnError> {
    let fail = |msg: &str| NnError::Checkpoint(msg.to_string());
    if bytes.len() < 8 + 4 + 4 + 8 + 8 || &bytes[..8] != MAGIC {
        return Err(fail("missing or wrong magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }

    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    let computed = fnv1a64(&bytes[..body_end]);
    if stored != computed {
        return Err(fail("checksum mismatch; file is corrupt"));
    }

    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e + 8 <= body_end)
        .ok_or_else(|| fail("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| NnError::Checkpoint(format!("header parse: {e}")))?;

    let count =
        u64::from_le_bytes(bytes[header_end..header_end + 8].try_into().expect("8 bytes")) as usize;
    let params_start = header_end + 8;
    if params_start + count * 8 != body_end {
        return Err(fail("parameter block length mismatch"));
    }
    let params: Vec<f64> = bytes[params_start..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    Network::with_params(header.input_channels, header.input_length, header.specs, params)
}

pub fn save(net: &Network, path: &Path) -> Result<(), NnError> {
    let bytes = to_bytes(net)?;
    fs::write(path, bytes).map_err(|source| NnError::CheckpointIo {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Network, NnError> {
    let bytes = fs::read(path).map_err(|source| NnError::CheckpointIo {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

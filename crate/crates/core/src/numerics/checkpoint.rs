//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"LSQRCKPT"
//! 8       4     u32    format version (currently 1)
//! 12      8     u64    header length H in bytes
//! 20      H     UTF-8 JSON header
//! 20+H    8*N   f64    payload, every block's values concatenated in header order
//! ```
//!
//! The JSON header is
//!
//! ```json
//! {
//!   "meta":   { ... free-form model description ... },
//!   "blocks": [ { "name": "...", "shape": [..], "constraint": {..}, "offset": 0, "len": 12 }, ... ]
//! }
//! ```
//!
//! where `offset` and `len` count `f64` values from the start of the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::{Constraint, ParameterBlock};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LSQRCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    shape: Vec<usize>,
    constraint: Constraint,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    blocks: Vec<BlockEntry>,
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub blocks: Vec<ParameterBlock>,
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&ParameterBlock> {
        self.blocks.iter().find(|b| b.name() == name)
    }
}

pub fn encode_checkpoint(meta: &serde_json::Value, blocks: &[&ParameterBlock]) -> Result<Vec<u8>> {
    let mut offset = 0;
    let entries = blocks
        .iter()
        .map(|b| {
            let e = BlockEntry {
                name: b.name().to_string(),
                shape: b.shape().to_vec(),
                constraint: b.constraint().clone(),
                offset,
                len: b.len(),
            };
            offset += b.len();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        meta: meta.clone(),
        blocks: entries,
    })?;

    let mut out = Vec::with_capacity(20 + header.len() + 8 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for b in blocks {
        for v in b.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("missing magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let payload_start = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("header runs past end of file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[20..payload_start])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let payload = &bytes[payload_start..];
    if !payload.len().is_multiple_of(8) {
        return Err(Error::Checkpoint("payload is not a whole number of f64 values".into()));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut blocks = Vec::with_capacity(header.blocks.len());
    for e in header.blocks {
        let end = e.offset + e.len;
        if end > floats.len() {
            return Err(Error::Checkpoint(format!("block '{}' runs past end of payload", e.name)));
        }
        let block = ParameterBlock::new(e.name, e.shape, floats[e.offset..end].to_vec(), e.constraint)
            .map_err(|err| Error::Checkpoint(err.to_string()))?;
        blocks.push(block);
    }
    Ok(Checkpoint {
        meta: header.meta,
        blocks,
    })
}

pub fn write_checkpoint(path: &Path, meta: &serde_json::Value, blocks: &[&ParameterBlock]) -> Result<()> {
    let bytes = encode_checkpoint(meta, blocks)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

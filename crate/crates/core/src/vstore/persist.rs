//! Store file format.
//!
//! Line 1 is a header `{"version":1,"dim":D,"count":N,"checksum":"<hex>"}`
//! where `checksum` is the 64-bit FNV-1a of every byte after the header's
//! newline, as 16 lowercase hex digits. Lines 2..=N+1 hold one
//! [`KnowledgeEntry`] each. Floats use shortest round-trip formatting, so a
//! load reproduces every vector bit for bit.

use super::{KnowledgeEntry, StoreError, VectorStore};
use crate::hashing::fnv1a64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub version: u32,
    pub dim: usize,
    pub count: usize,
    pub checksum: String,
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::CorruptFile(msg.into())
}

impl VectorStore {
    fn body_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let mut body = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut body, e).map_err(|err| corrupt(err.to_string()))?;
            body.push(b'\n');
        }
        Ok(body)
    }

    /// FNV-1a over the serialized entries; equal to the header checksum.
    pub fn checksum(&self) -> Result<u64, StoreError> {
        Ok(fnv1a64(&self.body_bytes()?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let body = self.body_bytes()?;
        let header = StoreHeader {
            version: STORE_FORMAT_VERSION,
            dim: self.dim,
            count: self.entries.len(),
            checksum: format!("{:016x}", fnv1a64(&body)),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        out.push(b'\n');
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header line"))?;
        let header: StoreHeader = serde_json::from_slice(&bytes[..split])
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.version != STORE_FORMAT_VERSION {
            return Err(corrupt(format!("unsupported version {}", header.version)));
        }
        let body = &bytes[split + 1..];
        let actual = format!("{:016x}", fnv1a64(body));
        if actual != header.checksum {
            return Err(corrupt(format!(
                "checksum mismatch: header {}, content {actual}",
                header.checksum
            )));
        }
        let text = std::str::from_utf8(body).map_err(|e| corrupt(e.to_string()))?;
        let entries = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str::<KnowledgeEntry>(line)
                    .map_err(|e| corrupt(format!("entry line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if entries.len() != header.count {
            return Err(corrupt(format!(
                "header declares {} entries, found {}",
                header.count,
                entries.len()
            )));
        }
        Self::build_with_dim(header.dim, entries).map_err(|e| corrupt(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

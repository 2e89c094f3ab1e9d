//! Content hashes shared by the store file format, caches and reports.

use fnv::FnvHasher;
use sha2::{Digest, Sha256};
use std::hash::Hasher;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

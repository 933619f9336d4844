// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stage-level seed derivation.

use sha2::{Digest, Sha256};

/// Derives an independent seed from `base` and a stage label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(base.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

//! Seed derivation.
//!
//! Every stage of a run draws its randomness from a seed derived from the
//! single base seed as the first eight bytes (little endian) of
//! `SHA-256(base_le || stage || 0x00 || index_le)`. The scheme is part of the
//! on-disk reproducibility contract and must not change between versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(base: u64, stage: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(base: u64, stage: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(base, stage, index))
}

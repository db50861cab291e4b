//! Deterministic RNG stream derivation.
//!
//! Every random stream in the pipeline is keyed by a base seed plus a
//! stable label (participant id, resample index, ...), so results do not
//! depend on iteration or thread scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 32-byte ChaCha seed from a base seed and a list of key parts.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, parts))
}

/// Stream for an indexed sub-task (participant index, resample index).
pub fn rng_indexed(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    rng_for(seed, &[domain.as_bytes(), &index.to_le_bytes()])
}

/// Short hex digest of arbitrary bytes, used for config hashes.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

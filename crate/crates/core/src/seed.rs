//! Named seed streams.
//!
//! A run carries a single `u64` seed. Every consumer of randomness derives its
//! own stream from that seed plus a stream name and optional qualifiers, so
//! adding randomness in one module never shifts the draws of another.
//!
//! Derivation: the first eight bytes (little endian) of
//! `SHA-256(seed_le || 0x00 || stream || 0x00 || part_0 || 0x00 || part_1 ...)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream used for corpus splits.
pub const SPLIT: &str = "split";
/// Stream used for negative sampling during self-training.
pub const NEGATIVES: &str = "negatives";
/// Stream used for per-epoch batch construction.
pub const BATCHING: &str = "batching";
/// Stream used for history perturbations.
pub const PERTURBATION: &str = "perturbation";
/// Stream used for synthetic world sampling.
pub const SYNTHESIS: &str = "synthesis";
/// Stream used for evaluation-time resampling.
pub const EVALUATION: &str = "evaluation";

pub fn derive(seed: u64, stream: &str, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(stream.as_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64, stream: &str, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, parts))
}

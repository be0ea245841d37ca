//! Seed plumbing. Every random decision in a run is drawn from a named
//! substream of the manifest seed so components can be re-seeded and
//! replayed independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent RNG for `label` from a master seed.
///
/// The derivation is a SHA-256 of the seed and the label, so distinct labels
/// give statistically independent streams and the mapping is stable across
/// platforms and releases.
pub fn substream(master: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Collapse a named substream to a single `u64` seed (for APIs that take one).
pub fn substream_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Deterministic partial Fisher-Yates draw of `amount` distinct indices from
/// `0..len`, without replacement. Pinned here rather than delegated so the
/// sampling order is part of the reproducibility contract.
pub fn sample_indices(rng: &mut impl Rng, len: usize, amount: usize) -> Vec<usize> {
    let amount = amount.min(len);
    let mut indices: Vec<usize> = (0..len).collect();
    for i in 0..amount {
        let j = rng.random_range(i..len);
        indices.swap(i, j);
    }
    indices.truncate(amount);
    indices
}

/// Deterministic full shuffle of `0..len` (Fisher-Yates).
pub fn shuffled_indices(rng: &mut impl Rng, len: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..len).collect();
    if len > 1 {
        for i in 0..len - 1 {
            let j = rng.random_range(i..len);
            indices.swap(i, j);
        }
    }
    indices
}

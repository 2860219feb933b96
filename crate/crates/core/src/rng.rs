//! Seeded randomness.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`], whose stream is stable across
//! platforms and releases. Per-run seeds are derived from a master seed by
//! [`derive_seed`]: the first eight bytes, little-endian, of
//! `SHA-256(master_le_u64 || run_le_u64 || stage_utf8)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_seed(master: u64, run: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(run.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

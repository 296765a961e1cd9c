//! Seed handling shared by every replicate farm.
//!
//! A run is determined by one top-level `u64` seed. Replicate `k` draws from
//! the ChaCha8 generator keyed by that seed with its 64-bit stream id set to
//! `k`, so the sequence a replicate sees depends only on `(seed, k)` and not on
//! which thread executes it or in which order replicates finish.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Generator for the top-level seed (stream 0).
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

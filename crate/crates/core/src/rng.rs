//! Seed bookkeeping for schedule-independent parallel simulation.
//!
//! Every independent unit of work (a bootstrap replicate, a Monte Carlo
//! replication) gets its own ChaCha stream keyed by `(seed, index)`, so the
//! output never depends on which thread ran which unit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for work unit `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes `(seed, index)` into a fresh 64-bit seed (SplitMix64 finalizer).
///
/// Used when a work unit itself spawns indexed sub-units.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

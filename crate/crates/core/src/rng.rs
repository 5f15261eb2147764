//! Deterministic seed derivation. Sweeps run cells in parallel under work
//! stealing, so every sampled object gets its own stream whose seed is a
//! stable mix of the master seed and the object's coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-avalanche, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stable hash of a master seed with a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x517cc1b727220a95);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part.wrapping_add(0xa0761d6478bd642f)));
    }
    state
}

/// Seeded ChaCha stream for a derived seed.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

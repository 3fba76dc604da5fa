//! Seeded sampling without replacement.
//!
//! The generator and the draw procedure are spelled out here instead of
//! relying on `rand`'s distribution code, whose output stream may change
//! between releases. Identical seeds give identical samples on every
//! platform and every build.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Name recorded in run manifests for the sampling procedure below.
pub const SAMPLER_ALGORITHM: &str = "chacha8-fisher-yates-v1";

fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Uniform integer in `[0, bound)` by rejection (no modulo bias).
fn below(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// Draws `k` distinct indices from `0..n` uniformly (partial Fisher-Yates),
/// returned in ascending order. If `k >= n` every index is returned.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = rng_from_seed(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(&mut rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

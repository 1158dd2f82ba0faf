//! Deterministic seed derivation for parallel work items.
//!
//! Episodes, search iterations, and per-sample draws each get their own
//! RNG stream derived from a base seed and an index, so results are
//! identical for any worker count or execution order.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// splitmix64 finalizer; good avalanche, cheap.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stream index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix(mix(base) ^ mix(index.wrapping_add(0x517c_c1b7_2722_0a95)))
}

/// Deterministic RNG for a given seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Seed derivation for reproducible, order-independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices into an independent child seed.
///
/// The same `(base, path)` always yields the same seed, and distinct paths
/// give statistically unrelated streams, so frames can be simulated in any
/// order or on any thread without changing results.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream labels used when deriving per-frame seeds.
pub mod stream {
    pub const INFO_BITS: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const PHASE_NOISE: u64 = 3;
    pub const AWGN: u64 = 4;
    pub const PADDING: u64 = 5;
}

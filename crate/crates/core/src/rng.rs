//! Seeded random streams.
//!
//! Every sampler takes a `&mut impl Rng`; the helpers here derive
//! independent, reproducible ChaCha streams from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `index` of `master`, tagged by `purpose`.
pub fn derive_seed(master: u64, purpose: u64, index: u64) -> u64 {
    mix(mix(master ^ mix(purpose)) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master: u64, purpose: u64, index: u64) -> ChainRng {
    rng_from_seed(derive_seed(master, purpose, index))
}

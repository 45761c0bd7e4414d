//! Seed derivation and the generator type used for every random stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator behind every stream in the crate. Fixed so seeds reproduce across builds.
pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for work item `index` under `base`. Distinct indices give
/// non-overlapping streams regardless of which worker runs them.
#[inline]
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Domain tags keep streams for different purposes apart under one base seed.
pub(crate) mod tag {
    pub const INIT: u64 = 0x1;
    pub const BATCH: u64 = 0x2;
    pub const EVAL: u64 = 0x3;
    pub const RUN: u64 = 0x4;
    pub const RECORD: u64 = 0x5;
    pub const PARAMS: u64 = 0x6;
    pub const SPLIT: u64 = 0x7;
    pub const MODEL: u64 = 0x8;
    pub const SHUFFLE: u64 = 0x9;
}

/// `derive_seed` on a tagged base.
#[inline]
pub(crate) fn tagged(base: u64, tag: u64, index: u64) -> u64 {
    derive_seed(derive_seed(base, tag ^ 0xA5A5_0000_0000_0000), index)
}

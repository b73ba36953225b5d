//! Seed derivation and per-unit random streams.
//!
//! All randomness is derived from `u64` seeds through [`derive_seed`], which
//! is a bijection in its `index` argument for a fixed `(master, tag)`, so
//! replication `r` and replication `r'` never share a seed. Unit-level draws
//! use one ChaCha8 stream per unit, so the draws of unit `i` do not depend on
//! the sample size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of the stream family `tag` under `master`.
#[inline]
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let base = splitmix64(master ^ splitmix64(tag));
    splitmix64(base.wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Stream tags used across the crate.
pub mod tag {
    pub const NETWORK: u64 = 1;
    pub const DATA: u64 = 2;
    pub const COPY: u64 = 3;
    pub const FRESH: u64 = 4;
    pub const LEARNER: u64 = 5;
    pub const FOLDS: u64 = 6;
    pub const PAIRS: u64 = 7;
    pub const TREE: u64 = 8;
    pub const REPLICATION: u64 = 9;
    pub const TRUTH: u64 = 10;
}

/// Generator seeded from `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The substream of `unit` under `seed`.
pub fn unit_stream(seed: u64, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit);
    rng
}

/// Uniform draw on `[0, 1)` with 53 bits of precision from a hashed counter.
#[inline]
pub fn hashed_unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(derive_seed(seed, a, b));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

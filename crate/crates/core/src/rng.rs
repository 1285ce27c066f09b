//! Seeding and sampling.
//!
//! Every random stream in the crate is a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`) keyed through `SeedableRng::seed_from_u64`.
//! Realization seeds are split off a master seed with [`realization_seed`],
//! so an ensemble is a pure function of its master seed no matter how the
//! realizations are scheduled.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64); splitmix64 seed split";

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function. A bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of realization `index` under `master`.
///
/// `master + (index + 1) * GAMMA` is injective in `index` modulo 2^64 because
/// the gamma is odd, and `splitmix64` is a bijection, so seeds of distinct
/// indices below 2^64 never collide.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform stream over [0, 1) with 53-bit resolution.
pub struct UniformStream {
    inner: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform over the open interval (0, 1), for inverse-CDF sampling.
    pub fn next_open_unit(&mut self) -> f64 {
        loop {
            let u = self.next_unit();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform over [lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }
}

//! Counter-based random streams keyed by path index.
//!
//! Every simulated path draws from its own ChaCha stream addressed by
//! `(seed, row, sub)`. The seed selects the key, the row selects the 64-bit
//! stream id and the sub-path selects a disjoint window of the block counter,
//! so path `i` produces the same numbers under any parallel schedule.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Words reserved per sub-path (2^36 words = 2^32 blocks).
const SUB_WINDOW_BITS: u32 = 36;

/// Sub-stream used for the draw of the exposure-date state.
pub const SUB_STATE: u64 = 0;
/// Sub-stream used for the post-exposure path in a training dataset.
pub const SUB_PAYOFF: u64 = 1;

#[derive(Clone, Debug)]
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, row: u64, sub: u64) -> Self {
        assert!(
            sub < (1u64 << (68 - SUB_WINDOW_BITS)),
            "sub-stream index out of range"
        );
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(row);
        inner.set_word_pos((sub as u128) << SUB_WINDOW_BITS);
        Self { inner }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Uniform draw in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Splits a seed into an unrelated seed for a different purpose
/// (e.g. test scenarios drawn independently of training scenarios).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! SplitMix64-based determinism: the one RNG used everywhere so that
//! shuffles, augmentation draws, and synthetic data reproduce bit-for-bit
//! across platforms, worker counts, and scheduling orders.
//!
//! The seeding scheme keys every random decision off `(global_seed, epoch,
//! sample index)` alone. A worker that picks up sample `i` mid-epoch derives
//! exactly the same draw sequence as a single-threaded run would, which is
//! what makes pipeline outputs independent of thread interleaving.

use alloc::vec::Vec;

use crate::error::CoreError;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRng {
    state: u64,
}

impl SampleRng {
    pub const fn new(state: u64) -> Self {
        SampleRng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1) from the top 53 bits of one draw.
    pub fn next_unit_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, bound) by modulo reduction. The modulo bias is
    /// negligible for the small bounds used here (image offsets, shuffle
    /// positions) and the single-draw cost keeps draw accounting fixed.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    pub const fn state(&self) -> u64 {
        self.state
    }
}

/// One SplitMix64 output for state `x`, discarding the advanced state.
pub fn mix(x: u64) -> u64 {
    SampleRng::new(x).next_u64()
}

/// Per-epoch shuffle order: Fisher–Yates over `[0, n)` driven by a generator
/// seeded from `(global_seed, epoch)`. Same arguments, same permutation.
pub fn permutation(global_seed: u64, epoch: u64, n: u64) -> Result<Vec<u64>, CoreError> {
    if n == 0 {
        return Err(CoreError::EmptyDataset);
    }
    let mut rng = SampleRng::new(mix(mix(global_seed) ^ epoch));
    let mut order: Vec<u64> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.next_below(i + 1);
        order.swap(i as usize, j as usize);
    }
    Ok(order)
}

/// Seed for one sample's augmentation draws. Depends only on the identity of
/// the sample within the epoch, never on which worker processes it.
pub fn sample_seed(global_seed: u64, epoch: u64, index: u64) -> u64 {
    mix(mix(mix(global_seed) ^ epoch) ^ index)
}

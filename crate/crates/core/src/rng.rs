//! Seeded pseudo-random numbers for weight initialization and epoch
//! shuffling.
//!
//! Reproducibility across implementations matters more here than
//! cryptographic quality, so the generator is pinned to SplitMix64 and
//! written out in full. Given 64-bit state `s`, one step is
//!
//! ```text
//! s  = s + 0x9E3779B97F4A7C15                (wrapping)
//! z  = s
//! z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (wrapping)
//! z  = (z ^ (z >> 27)) * 0x94D049BB133111EB  (wrapping)
//! output = z ^ (z >> 31)
//! ```
//!
//! Any implementation of these equations reproduces the exact batch order
//! and initial weights for a given seed.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output mixer on its own, used to decorrelate derived
/// seeds (per-epoch streams, per-purpose streams).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// A generator for an independent stream, derived from `seed` and a
    /// stream tag by double mixing so consecutive tags do not produce
    /// overlapping sequences.
    pub fn for_stream(seed: u64, tag: u64) -> Self {
        SplitMix64::new(mix64(seed ^ mix64(tag.wrapping_add(GAMMA))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`: the top 53 bits scaled by 2^-53.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)` by rejection sampling, so the result is unbiased
    /// and depends only on the draw sequence.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle, iterating from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

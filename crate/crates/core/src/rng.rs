//! Seeded randomness with a fixed, documented algorithm.
//!
//! Every random choice in the toolkit comes from PCG-XSL-RR 128/64
//! (`rand_pcg::Pcg64`). A `(seed, stream)` pair maps to a generator as
//!
//! ```text
//! state     = (seed as u128) << 64 | (seed ^ 0x9E37_79B9_7F4A_7C15)
//! increment = (stream as u128) << 1 | 1
//! ```
//!
//! followed by PCG's standard warm-up (`state += increment; step`). Distinct
//! streams give independent sub-generators for the same seed, so per-image
//! work can be split across threads without changing any draw.
//!
//! Bounded integers use rejection sampling on raw 64-bit outputs:
//! with `zone = 2^64 mod n`, draws below `zone` are rejected and the result is
//! `x mod n`. Unit floats take the top 53 bits: `(x >> 11) * 2^-53`.

use rand_core::Rng;
use rand_pcg::Pcg64;

const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Deterministic generator for one `(seed, stream)` pair.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Pcg64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let state = (u128::from(seed) << 64) | u128::from(seed ^ SEED_MIX);
        Self {
            inner: Pcg64::new(state, u128::from(stream)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let zone = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= zone {
                return x % n;
            }
        }
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.below(hi - lo + 1)
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Fisher-Yates, walking from the last slot down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

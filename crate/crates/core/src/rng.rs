//! The single seeded generator used everywhere in the crate.
//!
//! SplitMix64: the state advances by the golden-ratio increment and each
//! output is the state passed through the standard finalizer.
//!
//! ```text
//! state  = state + 0x9E3779B97F4A7C15          (wrapping)
//! z      = state
//! z      = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 (wrapping)
//! z      = (z ^ (z >> 27)) * 0x94D049BB133111EB (wrapping)
//! output = z ^ (z >> 31)
//! ```
//!
//! Derived helpers:
//! - `below(n)`   = `next_u64() % n`
//! - `unit_f64()` = `(next_u64() >> 11) * 2^-53`, uniform in `[0, 1)`
//! - `shuffle`    = Fisher-Yates from the back: for `i = n-1 ..= 1`, swap `i`
//!   with `below(i + 1)`.
//!
//! Everything here is small enough to replay by hand in a scripting language,
//! which is how the frozen expectations in the tests were produced.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, n)` by plain modulo reduction. `n` must be > 0.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_f64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

/// Child seed for stream `stream` of a base seed: the first output of a
/// generator seeded with `base ^ (stream * GOLDEN)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    SplitMix64::new(base ^ stream.wrapping_mul(GOLDEN)).next_u64()
}

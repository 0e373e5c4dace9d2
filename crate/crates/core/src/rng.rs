//! Small deterministic PRNG used everywhere a seeded draw is needed.
//!
//! SplitMix64 is stable across platforms and releases, which keeps frozen
//! test vectors and committed sample files valid forever.

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, bound)`. `bound` must be nonzero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Multiply-shift keeps the draw unbiased enough for simulation use.
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform f64 in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_bool(&mut self, p: f64) -> bool {
        p > 0.0 && self.next_f64() < p
    }
}

/// Derive an independent stream from a base seed and a domain label.
///
/// Used to give every sweep cell, byte and round its own reproducible
/// stream regardless of scheduling order.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0xD6E8_FEB8_6659_FD93;
    for &p in parts {
        h ^= p.wrapping_mul(0xA076_1D64_78BD_642F);
        let mut mixer = SplitMix64::new(h);
        h = mixer.next_u64();
    }
    h
}

//! Seeded, platform-independent pseudorandomness.
//!
//! The generator is xoshiro256++ seeded through SplitMix64, with standard
//! normals produced by the Marsaglia polar method. Both algorithms are fully
//! specified here, so a seed pins the entire output stream bit-for-bit on
//! every platform.

use alloc::vec::Vec;

use crate::linalg::Vector;
use crate::math;

/// Deterministic pseudorandom generator (xoshiro256++).
///
/// Single-owner by design: clone it if two independent consumers need
/// reproducible streams, or derive a sub-stream with [`SeededPrng::split`].
#[derive(Clone, Debug)]
pub struct SeededPrng {
    state: [u64; 4],
    spare_normal: Option<f64>,
}

impl SeededPrng {
    /// Builds the generator from a 64-bit seed via SplitMix64 expansion.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut next_sm = || {
            sm = sm.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        Self {
            state: [next_sm(), next_sm(), next_sm(), next_sm()],
            spare_normal: None,
        }
    }

    /// Derives an independent generator, so auxiliary sampling (metric
    /// evaluation, say) does not perturb the main stream.
    pub fn split(&self, stream: u64) -> Self {
        Self::new(self.state[0] ^ stream.wrapping_mul(0xA076_1D64_78BD_642F))
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` by rejection, bias-free.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw by the Marsaglia polar method. The rejected pair
    /// member is cached, so draws come in deterministic order.
    pub fn next_standard_normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = math::sqrt(-2.0 * math::ln(s) / s);
                self.spare_normal = Some(v * factor);
                return u * factor;
            }
        }
    }

    /// Vector of `n` independent standard normal draws.
    pub fn standard_normal_vector(&mut self, n: usize) -> Vector {
        Vector::from_fn(n, |_| self.next_standard_normal())
    }

    /// `count` distinct indices from `[0, n)` by partial Fisher-Yates;
    /// `count` is clamped to `n`.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        let count = count.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.next_index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

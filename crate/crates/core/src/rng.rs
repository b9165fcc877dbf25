//! splitmix64, the only source of randomness in the model.
//!
//! Streams are bit-identical across platforms, so parameter and activation
//! checksums can be compared between implementations.

use alloc::format;

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub const fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub const fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Draws `lo + (hi - lo) * u` with `u = next_u64() / 2^64`, evaluated in
    /// `f64` and rounded once to `f32`.
    ///
    /// The `f64` value is always below `hi`, but rounding can land on `hi`
    /// itself; that case returns the largest `f32` below `hi` so the result
    /// stays in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> Result<f32> {
        if lo >= hi || lo.is_nan() || hi.is_nan() || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidRange(format!("lo={lo} must be < hi={hi}")));
        }
        let u = self.next_u64() as f64 / 18_446_744_073_709_551_616.0;
        let (lo64, hi64) = (f64::from(lo), f64::from(hi));
        let v = (lo64 + (hi64 - lo64) * u) as f32;
        Ok(if v >= hi { next_down(hi) } else { v })
    }

    /// Derives an independent generator for a sub-stream.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }
}

fn next_down(x: f32) -> f32 {
    let bits = x.to_bits();
    if x == 0.0 {
        -f32::from_bits(1)
    } else if x > 0.0 {
        f32::from_bits(bits - 1)
    } else {
        f32::from_bits(bits + 1)
    }
}

//! IEEE-754 binary16 conversion for at-rest storage.
//!
//! Compute is always `f32`; half precision only exists in cache payloads.
//! Conversion is round-to-nearest-even, overflowing to signed infinity and
//! underflowing through subnormals to signed zero.

/// Encodes `x` as a binary16 bit pattern.
#[inline]
pub fn f32_to_f16(x: f32) -> u16 {
    half::f16::from_f32(x).to_bits()
}

#[inline]
pub fn f16_to_f32(bits: u16) -> f32 {
    half::f16::from_bits(bits).to_f32()
}

/// Largest finite binary16 value.
pub const F16_MAX: f32 = 65504.0;

/// True when `bits` encodes an infinity or NaN.
#[inline]
pub fn f16_is_non_finite(bits: u16) -> bool {
    bits & 0x7C00 == 0x7C00
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_encodings() {
        assert_eq!(f32_to_f16(1.0), 0x3C00);
        assert_eq!(f32_to_f16(0.0), 0x0000);
        assert_eq!(f32_to_f16(-0.0), 0x8000);
        assert_eq!(f32_to_f16(65504.0), 0x7BFF);
        assert_eq!(f32_to_f16(-2.0), 0xC000);
    }

    #[test]
    fn overflow_and_underflow() {
        // 65520 is the midpoint between 65504 and the next (unrepresentable) step
        assert_eq!(f32_to_f16(65519.0), 0x7BFF);
        assert_eq!(f32_to_f16(65520.0), 0x7C00);
        assert_eq!(f32_to_f16(-1.0e6), 0xFC00);
        assert_eq!(f32_to_f16(1.0e-9), 0x0000);
        assert_eq!(f32_to_f16(-1.0e-9), 0x8000);
        // smallest subnormal, 2^-24
        assert_eq!(f32_to_f16(5.960_464_5e-8), 0x0001);
        assert!(f16_is_non_finite(f32_to_f16(f32::INFINITY)));
        assert!(!f16_is_non_finite(0x7BFF));
    }

    #[test]
    fn ties_go_to_even() {
        // 1 + 2^-11 sits exactly between 0x3C00 and 0x3C01
        assert_eq!(f32_to_f16(1.0 + 1.0 / 2048.0), 0x3C00);
        // 1 + 3 * 2^-11 sits between 0x3C01 and 0x3C02
        assert_eq!(f32_to_f16(1.0 + 3.0 / 2048.0), 0x3C02);
    }
}

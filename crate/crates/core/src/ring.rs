//! Exact arithmetic in Z_2^64 and the fixed-point codec.
//!
//! A real `r` is represented as `round(r * 2^f)` embedded in the ring with
//! two's-complement semantics, so negative reals map to `2^64 - |r| * 2^f`.
//! Multiplying two scale-`f` encodings yields a scale-`2f` value; callers
//! rescale with [`FixedPointCodec::truncate`].

use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// One element of the ring of integers modulo 2^64.
///
/// All arithmetic wraps; nothing here ever traps on overflow.
#[derive(Copy, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);

    /// Signed (two's-complement) view of the raw word.
    #[inline]
    pub fn as_signed(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn wrapping_shl_value(self, k: u32) -> RingElement {
        RingElement(self.0.wrapping_shl(k))
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RingElement({})", self.0)
    }
}

impl Add for RingElement {
    type Output = RingElement;
    #[inline]
    fn add(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl AddAssign for RingElement {
    #[inline]
    fn add_assign(&mut self, rhs: RingElement) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl Sub for RingElement {
    type Output = RingElement;
    #[inline]
    fn sub(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl SubAssign for RingElement {
    #[inline]
    fn sub_assign(&mut self, rhs: RingElement) {
        self.0 = self.0.wrapping_sub(rhs.0);
    }
}

impl Mul for RingElement {
    type Output = RingElement;
    #[inline]
    fn mul(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = RingElement;
    #[inline]
    fn neg(self) -> RingElement {
        RingElement(self.0.wrapping_neg())
    }
}

/// Encoding parameters violated: the real value does not fit the codec range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeError;

impl fmt::Display for RangeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "value outside fixed-point range")
    }
}

/// Fixed-point codec with `frac_bits` fractional bits.
///
/// Representable reals satisfy `|r| < 2^(63 - frac_bits)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    frac_bits: u32,
}

impl FixedPointCodec {
    /// `frac_bits` must lie in `[8, 30]`.
    pub fn new(frac_bits: u32) -> Result<FixedPointCodec, RangeError> {
        if !(8..=30).contains(&frac_bits) {
            return Err(RangeError);
        }
        Ok(FixedPointCodec { frac_bits })
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Scale factor 2^f as a real.
    #[inline]
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Round-to-nearest-even of `r * 2^f`, embedded two's-complement.
    pub fn encode(&self, r: f64) -> Result<RingElement, RangeError> {
        let scaled = r * self.scale();
        if !scaled.is_finite() || libm::fabs(scaled) >= 9.223_372_036_854_775_8e18 {
            return Err(RangeError);
        }
        // rint rounds half to even under the default rounding mode.
        let rounded = libm::rint(scaled);
        if rounded >= 9.223_372_036_854_775_8e18 || rounded < -9.223_372_036_854_775_8e18 {
            return Err(RangeError);
        }
        Ok(RingElement(rounded as i64 as u64))
    }

    /// Signed interpretation divided by 2^f.
    #[inline]
    pub fn decode(&self, x: RingElement) -> f64 {
        x.as_signed() as f64 / self.scale()
    }

    /// Rescales a scale-`2f` product back to scale `f`: arithmetic right
    /// shift by `f` on the signed interpretation.
    #[inline]
    pub fn truncate(&self, x: RingElement) -> RingElement {
        RingElement((x.as_signed() >> self.frac_bits) as u64)
    }

    /// Arithmetic right shift by an arbitrary amount (signed view).
    #[inline]
    pub fn shift_signed(x: RingElement, k: u32) -> RingElement {
        RingElement((x.as_signed() >> k) as u64)
    }
}

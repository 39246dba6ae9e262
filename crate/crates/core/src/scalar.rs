//! Scalar abstraction shared by the mechanism, remap and LP code.
//!
//! Everything numeric in this crate is written against [`Scalar`]. The exact
//! instantiation is [`Rational`](crate::Rational); `f64` and `f32` are
//! supported with an absolute tolerance for sign tests, which is handy for
//! quick cross-checks but carries no exactness guarantee.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{NumAssignRef, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub trait Scalar: Clone + fmt::Debug + PartialOrd + Signed + NumAssignRef + Send + Sync + 'static {
    /// True when arithmetic is exact and comparisons need no tolerance.
    const EXACT: bool;

    /// Magnitude below which a value is treated as zero.
    fn tolerance() -> Self;

    fn from_rational(q: &BigRational) -> Self;

    fn to_f64(&self) -> f64;

    fn from_int(v: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(v)))
    }

    fn is_negligible(&self) -> bool {
        if Self::EXACT {
            self.is_zero()
        } else {
            self.abs() <= Self::tolerance()
        }
    }

    fn is_pos(&self) -> bool {
        *self > Self::tolerance()
    }

    fn is_neg(&self) -> bool {
        *self < -Self::tolerance()
    }

    fn approx_eq(&self, other: &Self) -> bool {
        sub(self, other).is_negligible()
    }

    /// `self <= other` up to tolerance.
    fn approx_le(&self, other: &Self) -> bool {
        !sub(self, other).is_pos()
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn tolerance() -> Self {
        BigRational::zero()
    }

    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn tolerance() -> Self {
        1e-9
    }

    fn from_rational(q: &BigRational) -> Self {
        ratio_to_f64(q)
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn tolerance() -> Self {
        1e-5
    }

    fn from_rational(q: &BigRational) -> Self {
        ratio_to_f64(q) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

pub(crate) fn mul<T: Scalar>(a: &T, b: &T) -> T {
    let mut out = a.clone();
    out *= b;
    out
}

pub(crate) fn sub<T: Scalar>(a: &T, b: &T) -> T {
    let mut out = a.clone();
    out -= b;
    out
}

pub(crate) fn div<T: Scalar>(a: &T, b: &T) -> T {
    let mut out = a.clone();
    out /= b;
    out
}

pub(crate) fn sum<'a, T: Scalar>(values: impl IntoIterator<Item = &'a T>) -> T {
    let mut acc = T::zero();
    for v in values {
        acc += v;
    }
    acc
}

/// Converts a ratio of big integers to the nearest `f64`, also for operands
/// beyond the range of `f64` as long as the quotient is representable.
pub fn ratio_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Shift both operands down so the division fits in f64.
    let nbits = q.numer().bits() as i64;
    let dbits = q.denom().bits() as i64;
    let shift_n = (nbits - 900).max(0) as usize;
    let shift_d = (dbits - 900).max(0) as usize;
    let n = (q.numer() >> shift_n).to_f64().unwrap_or(0.0);
    let d = (q.denom() >> shift_d).to_f64().unwrap_or(1.0);
    n / d * 2f64.powi((shift_n as i32) - (shift_d as i32))
}

/// Parses `"p/q"`, an integer `"p"`, or a plain decimal such as `"1.5"` or
/// `"-0.001"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::ParseRational(text.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let negative = int_part.starts_with('-');
        let digits_ok = |t: &str| t.chars().all(|c| c.is_ascii_digit());
        let int_digits = int_part.trim_start_matches(['-', '+']);
        if !digits_ok(int_digits) || !digits_ok(frac_part) || (int_digits.is_empty() && frac_part.is_empty()) {
            return Err(bad());
        }
        let mantissa = format!("{int_digits}{frac_part}");
        let mantissa = if mantissa.is_empty() { "0".to_string() } else { mantissa };
        let mut numer = BigInt::from_str(&mantissa).map_err(|_| bad())?;
        if negative {
            numer = -numer;
        }
        let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
        return Ok(BigRational::new(numer, denom));
    }
    let p = BigInt::from_str(s).map_err(|_| bad())?;
    Ok(BigRational::from_integer(p))
}

/// Canonical lowest-terms rendering: `"p/q"`, or `"p"` when `q == 1`.
pub fn format_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Renders `q` as a decimal with `digits` digits after the point (truncated
/// toward zero).
pub fn to_decimal_string(q: &BigRational, digits: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10u32), digits);
    let scaled = (q.numer() * &scale) / q.denom();
    let negative = scaled.is_negative() || (q.is_negative() && scaled.is_zero());
    let magnitude = scaled.abs().to_string();
    let padded = if magnitude.len() <= digits {
        format!("{}{}", "0".repeat(digits + 1 - magnitude.len()), magnitude)
    } else {
        magnitude
    };
    let split = padded.len() - digits;
    let (int_part, frac_part) = padded.split_at(split);
    let sign = if negative { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn parses_all_accepted_forms() {
        assert_eq!(parse_rational("2/4").unwrap(), q(1, 2));
        assert_eq!(parse_rational("7").unwrap(), q(7, 1));
        assert_eq!(parse_rational("1.5").unwrap(), q(3, 2));
        assert_eq!(parse_rational("-0.001").unwrap(), q(-1, 1000));
        assert_eq!(parse_rational(" 3 / -6 ").unwrap(), q(-1, 2));
        assert_eq!(parse_rational(".25").unwrap(), q(1, 4));
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "1/0", "abc", "1.2.3", "1/x", "."] {
            assert!(parse_rational(s).is_err(), "{s}");
        }
    }

    #[test]
    fn canonical_format() {
        assert_eq!(format_rational(&q(4, 8)), "1/2");
        assert_eq!(format_rational(&q(-6, 3)), "-2");
        assert_eq!(format_rational(&q(0, 5)), "0");
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal_string(&q(1, 3), 4), "0.3333");
        assert_eq!(to_decimal_string(&q(-1, 8), 3), "-0.125");
        assert_eq!(to_decimal_string(&q(-1, 3000), 2), "-0.00");
        assert_eq!(to_decimal_string(&q(5, 1), 0), "5");
    }

    #[test]
    fn huge_ratio_converts() {
        let big = num_traits::pow(BigInt::from(10u32), 400);
        let r = BigRational::new(big.clone() * 3, big);
        assert!((ratio_to_f64(&r) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tolerance_semantics() {
        assert!(1e-12f64.is_negligible());
        assert!(!q(1, 1_000_000_000_000).is_negligible());
        assert!(q(1, 3).approx_le(&q(1, 3)));
        assert!(!q(1, 2).approx_le(&q(1, 3)));
    }
}

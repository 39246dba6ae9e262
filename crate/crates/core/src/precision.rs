//! High-precision reals as fixed-point rationals.
//!
//! A value computed "to `digits` digits" is a rational with denominator
//! `10^digits`, truncated toward zero, so its error is below `10^-digits`.
//! Keeping these as [`Rational`]s lets irrational loss values flow through
//! the exact LP and remap code unchanged.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::Rational;

pub const DEFAULT_DIGITS: u32 = 64;

/// Environment variable overriding [`DEFAULT_DIGITS`] for front ends.
pub const PRECISION_ENV: &str = "PRIVOPT_PRECISION";

fn ten_pow(digits: u32) -> BigUint {
    num_traits::pow(BigUint::from(10u32), digits as usize)
}

/// `floor(value^(1/root) * 10^digits) / 10^digits` for `value >= 0`.
pub fn nth_root(value: &Rational, root: u32, digits: u32) -> Rational {
    assert!(root >= 1, "root must be positive");
    assert!(!value.is_negative(), "root of a negative value");
    let scale = ten_pow(digits);
    // floor((p/q * 10^(digits*root))^(1/root)) == floor(floor(p*10^(d*r)/q)^(1/r))
    let p = value.numer().to_biguint().expect("non-negative");
    let q = value.denom().to_biguint().expect("positive");
    let radicand = (p * num_traits::pow(scale.clone(), root as usize)) / q;
    let rooted = radicand.nth_root(root);
    Rational::new(BigInt::from(rooted), BigInt::from(scale))
}

pub fn sqrt(value: &Rational, digits: u32) -> Rational {
    nth_root(value, 2, digits)
}

/// `base^exponent` for a non-negative integer base and rational exponent.
///
/// Returns the value and whether it is exact. Integer exponents and perfect
/// powers are exact; everything else is truncated to `digits` digits.
pub fn pow(base: u64, exponent: &Rational, digits: u32) -> (Rational, bool) {
    if base == 0 {
        return if exponent.is_zero() { (Rational::one(), true) } else { (Rational::zero(), true) };
    }
    let (a, b) = (exponent.numer().clone(), exponent.denom().clone());
    let a_abs = a.abs().to_usize().expect("exponent numerator too large");
    let b = b.to_u32().expect("exponent denominator too large");
    let powered = num_traits::pow(BigInt::from(base), a_abs);
    let powered = if a.is_negative() { Rational::new(BigInt::one(), powered) } else { Rational::from_integer(powered) };
    if b == 1 {
        return (powered, true);
    }
    if let Some(exact) = exact_root(&powered, b) {
        return (exact, true);
    }
    (nth_root(&powered, b, digits), false)
}

fn exact_root(value: &Rational, root: u32) -> Option<Rational> {
    let n = value.numer().to_biguint()?;
    let d = value.denom().to_biguint()?;
    let rn = n.nth_root(root);
    let rd = d.nth_root(root);
    if num_traits::pow(rn.clone(), root as usize) == n && num_traits::pow(rd.clone(), root as usize) == d {
        Some(Rational::new(rn.into(), rd.into()))
    } else {
        None
    }
}

/// Rounds an exact rational down to `digits` decimal digits.
pub fn truncate(value: &Rational, digits: u32) -> Rational {
    let scale = BigInt::from(ten_pow(digits));
    let scaled = (value.numer() * &scale).div_floor(value.denom());
    Rational::new(scaled, scale)
}

/// `10^-exponent` as an exact rational.
pub fn ten_to_minus(exponent: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::from(ten_pow(exponent)))
}

/// Reads the precision override from the environment, falling back to
/// [`DEFAULT_DIGITS`].
pub fn digits_from_env() -> u32 {
    std::env::var(PRECISION_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|d| *d > 0).unwrap_or(DEFAULT_DIGITS)
}

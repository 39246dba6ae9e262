//! The geometric mechanism, its truncation to `0..=n`, and the closed-form
//! two-point losses used to compare it with the Laplace mechanism.
//!
//! The infinite-range geometric mechanism is never materialized. What exists
//! is its probability mass function, the truncated mechanism `G`, and a
//! finite window whose two outermost responses carry the exact tail mass.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, PrivacyLevel, Remap};
use crate::precision;
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeometricSpec {
    pub alpha: PrivacyLevel,
    pub n: usize,
}

impl GeometricSpec {
    pub fn new(alpha: PrivacyLevel, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::Dimension("geometric mechanism needs n >= 1".into()));
        }
        Ok(Self { alpha, n })
    }
}

fn alpha_pow(alpha: &Rational, k: u64) -> Rational {
    num_traits::pow(alpha.clone(), k as usize)
}

/// `Pr[Z = z] = (1 - alpha) / (1 + alpha) · alpha^|z|`.
pub fn geometric_pmf(a: &PrivacyLevel, z: i64) -> Rational {
    let alpha = a.alpha();
    let one = Rational::one();
    (&one - alpha) / (&one + alpha) * alpha_pow(alpha, z.unsigned_abs())
}

/// `Pr[Z >= k] = alpha^k / (1 + alpha)` for `k >= 1`; by symmetry also
/// `Pr[Z <= -k]`.
pub fn geometric_tail(a: &PrivacyLevel, k: u64) -> Rational {
    assert!(k >= 1, "tail starts at k >= 1");
    let alpha = a.alpha();
    alpha_pow(alpha, k) / (Rational::one() + alpha)
}

/// The truncated geometric mechanism `G` over responses `0..=n`: the
/// geometric mechanism with negative outputs clamped to 0 and outputs above
/// `n` clamped to `n`.
pub fn truncated_geometric(spec: &GeometricSpec) -> Mechanism {
    let n = spec.n;
    let a = &spec.alpha;
    let alpha = a.alpha();
    let edge = Rational::one() / (Rational::one() + alpha);
    let rows = (0..=n)
        .map(|i| {
            (0..=n)
                .map(|r| {
                    if r == 0 {
                        // Pr[i + Z <= 0]
                        if i == 0 {
                            edge.clone()
                        } else {
                            geometric_tail(a, i as u64)
                        }
                    } else if r == n {
                        if i == n {
                            edge.clone()
                        } else {
                            geometric_tail(a, (n - i) as u64)
                        }
                    } else {
                        geometric_pmf(a, r as i64 - i as i64)
                    }
                })
                .collect()
        })
        .collect();
    Mechanism::over_results(rows).expect("square by construction")
}

/// Geometric mechanism restricted to responses `-k-1 ..= n+k+1`.
///
/// Interior labels `-k..=n+k` carry the pmf exactly. Label `-k-1` carries
/// all mass at or below `-k-1`, and label `n+k+1` all mass at or above it,
/// so rows sum to one and any remap that is constant on each tail sees the
/// same distribution as the untruncated mechanism.
pub fn windowed_geometric(spec: &GeometricSpec, k: usize) -> Mechanism {
    let n = spec.n as i64;
    let k = k as i64;
    let a = &spec.alpha;
    let lo = -k - 1;
    let hi = n + k + 1;
    let responses: Vec<i64> = (lo..=hi).collect();
    let rows = (0..=n)
        .map(|i| {
            responses
                .iter()
                .map(|&r| {
                    if r == lo {
                        geometric_tail(a, (i - lo) as u64)
                    } else if r == hi {
                        geometric_tail(a, (hi - i) as u64)
                    } else {
                        geometric_pmf(a, r - i)
                    }
                })
                .collect()
        })
        .collect();
    Mechanism::new(spec.n, responses, rows).expect("dimensions by construction")
}

/// Clamp remap from the window labels of [`windowed_geometric`] onto `0..=n`.
pub fn truncation_remap(n: usize, k: usize) -> Remap {
    let n = n as i64;
    let k = k as i64;
    Remap::from_fn((-k - 1..=n + k + 1).collect(), (0..=n).collect(), |r| r.clamp(0, n))
        .expect("clamping stays in range")
}

/// Optimally remapped geometric loss for the uniform user on results
/// `{0, 1}`: `alpha / (1 + alpha)`.
///
/// Absolute and binary loss agree on `{0, 1}`, so the value does not depend
/// on which of the two the user has.
pub fn geometric_two_point_loss(a: &PrivacyLevel) -> Rational {
    a.alpha() / (Rational::one() + a.alpha())
}

/// Optimally remapped Laplace loss for the same two-point user:
/// `sqrt(alpha) / 2`, truncated to `digits` digits.
pub fn laplace_two_point_loss(a: &PrivacyLevel, digits: u32) -> Rational {
    precision::sqrt(a.alpha(), digits) / Rational::from_integer(BigInt::from(2))
}

/// `laplace / geometric` at the two-point instance, truncated to `digits`.
pub fn laplace_geometric_ratio(a: &PrivacyLevel, digits: u32) -> Rational {
    let geo = geometric_two_point_loss(a);
    if geo.is_zero() {
        return Rational::zero();
    }
    precision::truncate(&(laplace_two_point_loss(a, digits + 4) / geo), digits)
}

//! Exact construction and verification of optimal differentially private
//! mechanisms for count queries.
//!
//! A count query over a database of `n` rows returns a result in
//! `0..=n`. An oblivious mechanism is a row-stochastic matrix from results to
//! responses; it is `alpha`-private when adjacent rows agree within a factor
//! `alpha` in every column. A user is a prior over results and a monotone
//! loss. This crate
//!
//! * builds the truncated geometric mechanism and related constructions
//!   ([`mechanisms`]),
//! * computes a user's Bayes-optimal remap of any mechanism ([`remap`]),
//! * solves the user-specific linear program exactly with a rational simplex
//!   ([`lp`], [`optlp`]),
//! * classifies LP vertices by their constraint matrix and rebuilds them as
//!   remaps of the geometric mechanism ([`analysis`]),
//! * and models non-oblivious mechanisms over small database spaces
//!   ([`nonoblivious`]).
//!
//! All numeric code is generic over [`Scalar`]; [`Rational`] is the exact
//! instantiation used throughout, `f64` is available for quick
//! approximations.

pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod json;
pub mod loss;
pub mod lp;
pub mod mechanism;
pub mod mechanisms;
pub mod nonoblivious;
pub mod optlp;
pub mod precision;
pub mod remap;
pub mod scalar;

pub use error::{Error, Result};
pub use loss::{expected_loss, LossFunction, LossKind, UserModel};
pub use mechanism::{check_differential_privacy, check_row_stochastic, compose, Mechanism, PrivacyLevel, Remap};
pub use scalar::Scalar;

/// Exact arbitrary-precision rational; the scalar every exact path uses.
pub type Rational = num_rational::BigRational;

/// Mechanism over exact rationals.
pub type ExactMechanism = Mechanism<Rational>;
/// Mechanism over `f64`, for approximate cross-checks.
pub type FloatMechanism = Mechanism<f64>;
/// Remap over exact rationals.
pub type ExactRemap = Remap<Rational>;

/// `p / q` as a [`Rational`]. Panics if `q == 0`.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(p.into(), q.into())
}

//! Users: a prior over query results and a monotone loss function.

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::precision::{self, DEFAULT_DIGITS};
use crate::scalar::{format_rational, mul, Scalar};
use crate::Rational;

#[derive(Clone, Debug, PartialEq)]
pub enum LossKind {
    /// `|i - r|`
    Absolute,
    /// `(i - r)^2`
    Squared,
    /// 0 when `i == r`, 1 otherwise.
    Binary,
    /// `|i - r|^p`
    Power { exponent: Rational },
    /// Explicit table `l[i][r]` over results × results.
    Tabulated(Vec<Vec<Rational>>),
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Absolute => "absolute",
            LossKind::Squared => "squared",
            LossKind::Binary => "binary",
            LossKind::Power { .. } => "power",
            LossKind::Tabulated(_) => "tabulated",
        }
    }
}

/// Loss `l(i, r)`: non-negative and nondecreasing in `|i - r|` for each `i`.
///
/// Values are exact rationals except for power losses whose value at some
/// distance is irrational; those are truncated to `digits` decimal digits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossFunction {
    kind: LossKind,
    digits: u32,
}

impl LossFunction {
    pub fn new(kind: LossKind) -> Result<Self> {
        Self::with_digits(kind, DEFAULT_DIGITS)
    }

    pub fn with_digits(kind: LossKind, digits: u32) -> Result<Self> {
        if digits == 0 {
            return Err(Error::Loss("precision must be at least one digit".into()));
        }
        match &kind {
            LossKind::Power { exponent } if exponent.is_negative() => {
                return Err(Error::Loss(format!(
                    "power exponent {} makes the loss decreasing",
                    format_rational(exponent)
                )))
            }
            LossKind::Tabulated(table) => validate_table(table)?,
            _ => {}
        }
        Ok(Self { kind, digits })
    }

    pub fn absolute() -> Self {
        Self::new(LossKind::Absolute).expect("valid")
    }

    pub fn squared() -> Self {
        Self::new(LossKind::Squared).expect("valid")
    }

    pub fn binary() -> Self {
        Self::new(LossKind::Binary).expect("valid")
    }

    pub fn power(exponent: Rational) -> Result<Self> {
        Self::new(LossKind::Power { exponent })
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Same loss evaluated at a different precision.
    pub fn at_digits(&self, digits: u32) -> Result<Self> {
        Self::with_digits(self.kind.clone(), digits)
    }

    /// Whether every value is an exact rational (no truncation anywhere).
    pub fn is_exact(&self) -> bool {
        match &self.kind {
            LossKind::Power { exponent } => exponent.denom().is_one(),
            _ => true,
        }
    }

    /// `l(i, r)` for integer labels. Tabulated losses are only defined on
    /// the table's own index range.
    pub fn value(&self, i: i64, r: i64) -> Result<Rational> {
        let d = (i - r).unsigned_abs();
        Ok(match &self.kind {
            LossKind::Absolute => Rational::from_integer(d.into()),
            LossKind::Squared => Rational::from_integer((d * d).into()),
            LossKind::Binary => {
                if d == 0 {
                    Rational::zero()
                } else {
                    Rational::one()
                }
            }
            LossKind::Power { exponent } => precision::pow(d, exponent, self.digits).0,
            LossKind::Tabulated(table) => {
                let cell = usize::try_from(i)
                    .ok()
                    .zip(usize::try_from(r).ok())
                    .and_then(|(i, r)| table.get(i).and_then(|row| row.get(r)));
                cell.cloned().ok_or_else(|| Error::Loss(format!("tabulated loss undefined at ({i}, {r})")))?
            }
        })
    }

    /// Loss values for results `0..=n` against the given response labels,
    /// converted into the working scalar.
    pub fn table<T: Scalar>(&self, n: usize, responses: &[i64]) -> Result<Vec<Vec<T>>> {
        (0..=n as i64)
            .map(|i| responses.iter().map(|&r| self.value(i, r).map(|v| T::from_rational(&v))).collect())
            .collect()
    }
}

fn validate_table(table: &[Vec<Rational>]) -> Result<()> {
    let size = table.len();
    for (i, row) in table.iter().enumerate() {
        if row.len() != size {
            return Err(Error::Loss(format!("tabulated loss row {i} has {} entries, expected {size}", row.len())));
        }
        if let Some(r) = row.iter().position(|v| v.is_negative()) {
            return Err(Error::Loss(format!("negative loss at ({i}, {r})")));
        }
        // |i - a| <= |i - b| must imply l(i, a) <= l(i, b)
        for a in 0..size {
            for b in 0..size {
                if i.abs_diff(a) <= i.abs_diff(b) && row[a] > row[b] {
                    return Err(Error::Loss(format!(
                        "loss row {i} is not nondecreasing in distance: l({i},{a}) > l({i},{b})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Prior over results `0..=n` together with a loss function.
#[derive(Clone, Debug, PartialEq)]
pub struct UserModel {
    prior: Vec<Rational>,
    loss: LossFunction,
}

impl UserModel {
    pub fn new(prior: Vec<Rational>, loss: LossFunction) -> Result<Self> {
        if prior.len() < 2 {
            return Err(Error::Prior("need a prior over at least two results".into()));
        }
        if let Some(i) = prior.iter().position(|p| p.is_negative()) {
            return Err(Error::Prior(format!("entry {i} is negative")));
        }
        let total: Rational = prior.iter().sum();
        if !total.is_one() {
            return Err(Error::Prior(format!("entries sum to {}", format_rational(&total))));
        }
        if let LossKind::Tabulated(table) = loss.kind() {
            if table.len() != prior.len() {
                return Err(Error::Dimension(format!(
                    "tabulated loss covers {} results, prior covers {}",
                    table.len(),
                    prior.len()
                )));
            }
        }
        Ok(Self { prior, loss })
    }

    pub fn uniform(n: usize, loss: LossFunction) -> Self {
        let p = Rational::new(1.into(), ((n + 1) as i64).into());
        Self::new(vec![p; n + 1], loss).expect("uniform prior is valid")
    }

    /// Largest result `n`.
    pub fn n(&self) -> usize {
        self.prior.len() - 1
    }

    pub fn prior(&self) -> &[Rational] {
        &self.prior
    }

    pub fn loss(&self) -> &LossFunction {
        &self.loss
    }

    pub fn with_loss(&self, loss: LossFunction) -> Result<Self> {
        Self::new(self.prior.clone(), loss)
    }
}

/// `Σ_i p_i Σ_r x[i][r] · l(i, r)` over the mechanism's own response labels.
///
/// Exact when the loss is exact; otherwise the error is below
/// `10^-digits` times the largest possible total weight (one).
pub fn expected_loss<T: Scalar>(m: &Mechanism<T>, u: &UserModel) -> Result<T> {
    if m.n() != u.n() {
        return Err(Error::Dimension(format!("mechanism covers results 0..={}, prior covers 0..={}", m.n(), u.n())));
    }
    let table = u.loss().table::<T>(m.n(), m.responses())?;
    Ok(weighted_loss(m.rows(), u.prior(), &table))
}

pub(crate) fn weighted_loss<T: Scalar>(rows: &[Vec<T>], prior: &[Rational], table: &[Vec<T>]) -> T {
    let mut total = T::zero();
    for ((row, p), losses) in rows.iter().zip(prior).zip(table) {
        if p.is_zero() {
            continue;
        }
        let mut inner = T::zero();
        for (x, l) in row.iter().zip(losses) {
            if !x.is_zero() && !l.is_zero() {
                inner += &mul(x, l);
            }
        }
        total += &mul(&T::from_rational(p), &inner);
    }
    total
}

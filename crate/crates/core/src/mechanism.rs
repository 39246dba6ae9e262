//! Oblivious mechanisms, remaps, and the checks that define them.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed};

use crate::error::{Error, Result};
use crate::scalar::{format_rational, mul, parse_rational, sum, Scalar};
use crate::Rational;

/// Privacy level `alpha` with `0 < alpha < 1`.
///
/// Larger values mean more privacy: neighboring inputs must produce every
/// response with probabilities within a factor `alpha` of each other.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrivacyLevel(Rational);

impl PrivacyLevel {
    pub fn new(alpha: Rational) -> Result<Self> {
        if alpha.is_positive() && alpha < Rational::one() {
            Ok(Self(alpha))
        } else {
            Err(Error::PrivacyLevel(format_rational(&alpha)))
        }
    }

    pub fn from_ratio(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::ParseRational(format!("{numer}/{denom}")));
        }
        Self::new(Rational::new(numer.into(), denom.into()))
    }

    pub fn alpha(&self) -> &Rational {
        &self.0
    }

    pub fn value<T: Scalar>(&self) -> T {
        T::from_rational(&self.0)
    }
}

impl FromStr for PrivacyLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(parse_rational(s)?)
    }
}

impl fmt::Display for PrivacyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(&self.0))
    }
}

/// Row-stochastic matrix `x[i][r]`: the probability of emitting the `r`-th
/// response label when the query result is `i`, for results `0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mechanism<T = Rational> {
    n: usize,
    responses: Vec<i64>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> Mechanism<T> {
    /// Checks dimensions only; stochasticity is left to
    /// [`check_row_stochastic`] so that malformed matrices can be reported.
    pub fn new(n: usize, responses: Vec<i64>, rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.len() != n + 1 {
            return Err(Error::Dimension(format!("expected {} rows for n = {n}, found {}", n + 1, rows.len())));
        }
        check_shape(&rows, responses.len())?;
        check_distinct(&responses)?;
        Ok(Self { n, responses, rows })
    }

    /// Mechanism whose responses are the results themselves, `0..=n`.
    pub fn over_results(rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("mechanism needs at least one row".into()));
        }
        let n = rows.len() - 1;
        Self::new(n, (0..=n as i64).collect(), rows)
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..=n).map(|i| (0..=n).map(|r| if i == r { T::one() } else { T::zero() }).collect()).collect();
        Self { n, responses: (0..=n as i64).collect(), rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn responses(&self) -> &[i64] {
        &self.responses
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, col: usize) -> &T {
        &self.rows[i][col]
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        self.rows.iter().map(|row| row[col].clone()).collect()
    }

    pub fn response_index(&self, label: i64) -> Option<usize> {
        self.responses.iter().position(|&r| r == label)
    }

    /// True when the responses are exactly `0..=n` in order.
    pub fn has_range_n(&self) -> bool {
        self.responses.len() == self.n + 1 && self.responses.iter().enumerate().all(|(k, &r)| r == k as i64)
    }

    pub fn into_rows(self) -> Vec<Vec<T>> {
        self.rows
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Mechanism<U> {
        Mechanism {
            n: self.n,
            responses: self.responses.clone(),
            rows: self.rows.iter().map(|row| row.iter().map(&f).collect()).collect(),
        }
    }

    /// Same mechanism with the response columns listed in a new order.
    /// `order[k]` is the old column placed at position `k`; labels travel
    /// with their columns.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.responses.len()];
        if order.len() != self.responses.len()
            || order.iter().any(|&c| c >= seen.len() || std::mem::replace(&mut seen[c], true))
        {
            return Err(Error::Dimension("column order is not a permutation".into()));
        }
        Ok(Self {
            n: self.n,
            responses: order.iter().map(|&c| self.responses[c]).collect(),
            rows: self.rows.iter().map(|row| order.iter().map(|&c| row[c].clone()).collect()).collect(),
        })
    }

    /// Same matrix with response labels replaced.
    pub fn relabel(&self, responses: Vec<i64>) -> Result<Self> {
        Self::new(self.n, responses, self.rows.clone())
    }
}

impl Mechanism<Rational> {
    pub fn to_f64(&self) -> Mechanism<f64> {
        self.map(Scalar::to_f64)
    }
}

impl<T: Scalar> fmt::Display for Mechanism<T>
where
    T: fmt::Display,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in\\out")?;
        for r in &self.responses {
            write!(f, "\t{r}")?;
        }
        writeln!(f)?;
        for (i, row) in self.rows.iter().enumerate() {
            write!(f, "{i}")?;
            for v in row {
                write!(f, "\t{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Row-stochastic reinterpretation `y[r'][r]` from source labels to target
/// labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Remap<T = Rational> {
    sources: Vec<i64>,
    targets: Vec<i64>,
    rows: Vec<Vec<T>>,
    deterministic: bool,
}

impl<T: Scalar> Remap<T> {
    pub fn new(sources: Vec<i64>, targets: Vec<i64>, rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.len() != sources.len() {
            return Err(Error::Dimension(format!("remap has {} rows for {} source labels", rows.len(), sources.len())));
        }
        check_shape(&rows, targets.len())?;
        check_distinct(&sources)?;
        check_distinct(&targets)?;
        match check_row_stochastic(&rows)? {
            StochasticReport::Valid => {}
            bad => return Err(Error::Dimension(format!("remap is not row-stochastic: {bad}"))),
        }
        let deterministic = rows.iter().all(|row| {
            row.iter().filter(|v| v.approx_eq(&T::one())).count() == 1
                && row.iter().filter(|v| !v.is_negligible()).count() == 1
        });
        Ok(Self { sources, targets, rows, deterministic })
    }

    /// Deterministic remap sending `sources[k]` to `targets[image[k]]`.
    pub fn deterministic(sources: Vec<i64>, targets: Vec<i64>, image: &[usize]) -> Result<Self> {
        if image.len() != sources.len() || image.iter().any(|&t| t >= targets.len()) {
            return Err(Error::Dimension("deterministic image out of range".into()));
        }
        let rows = image
            .iter()
            .map(|&t| (0..targets.len()).map(|k| if k == t { T::one() } else { T::zero() }).collect())
            .collect();
        Self::new(sources, targets, rows)
    }

    /// Deterministic remap given as a function on labels.
    pub fn from_fn(sources: Vec<i64>, targets: Vec<i64>, f: impl Fn(i64) -> i64) -> Result<Self> {
        let image = sources
            .iter()
            .map(|&s| {
                let t = f(s);
                targets
                    .iter()
                    .position(|&x| x == t)
                    .ok_or_else(|| Error::Dimension(format!("label {s} maps to {t}, which is not a target")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::deterministic(sources, targets, &image)
    }

    pub fn identity(labels: Vec<i64>) -> Self {
        let image: Vec<usize> = (0..labels.len()).collect();
        Self::deterministic(labels.clone(), labels, &image).expect("identity is well formed")
    }

    pub fn sources(&self) -> &[i64] {
        &self.sources
    }

    pub fn targets(&self) -> &[i64] {
        &self.targets
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// Target index chosen for each source, when deterministic.
    pub fn image(&self) -> Option<Vec<usize>> {
        if !self.deterministic {
            return None;
        }
        Some(
            self.rows
                .iter()
                .map(|row| row.iter().position(|v| v.approx_eq(&T::one())).expect("deterministic row"))
                .collect(),
        )
    }

    /// Target label for a source label, when deterministic.
    pub fn target_of(&self, source: i64) -> Option<i64> {
        let k = self.sources.iter().position(|&s| s == source)?;
        let image = self.image()?;
        Some(self.targets[image[k]])
    }

    /// Deterministic bijection between equal-size label sets.
    pub fn is_permutation(&self) -> bool {
        match self.image() {
            Some(image) if self.sources.len() == self.targets.len() => {
                let distinct: HashSet<_> = image.iter().collect();
                distinct.len() == image.len()
            }
            _ => false,
        }
    }

    /// `(self ∘ first)`: apply `first`, then `self`.
    pub fn after(&self, first: &Remap<T>) -> Result<Remap<T>> {
        if first.targets != self.sources {
            return Err(Error::ResponseMismatch("inner targets differ from outer sources".into()));
        }
        let rows = first.rows.iter().map(|row| matmul_row(row, &self.rows, self.targets.len())).collect();
        Remap::new(first.sources.clone(), self.targets.clone(), rows)
    }
}

fn check_shape<T>(rows: &[Vec<T>], width: usize) -> Result<()> {
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != width) {
        return Err(Error::Dimension(format!("row {i} has {} entries, expected {width}", row.len())));
    }
    Ok(())
}

fn check_distinct(labels: &[i64]) -> Result<()> {
    let set: HashSet<_> = labels.iter().collect();
    if set.len() != labels.len() {
        return Err(Error::Dimension("response labels must be distinct".into()));
    }
    Ok(())
}

fn matmul_row<T: Scalar>(row: &[T], matrix: &[Vec<T>], width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); width];
    for (weight, mrow) in row.iter().zip(matrix) {
        if weight.is_zero() {
            continue;
        }
        for (o, v) in out.iter_mut().zip(mrow) {
            if !v.is_zero() {
                *o += &mul(weight, v);
            }
        }
    }
    out
}

/// Outcome of [`check_row_stochastic`].
#[derive(Clone, Debug, PartialEq)]
pub enum StochasticReport<T = Rational> {
    Valid,
    /// An entry lies outside `[0, 1]`.
    OutOfRange {
        row: usize,
        column: usize,
        value: T,
    },
    /// A row does not sum to one.
    RowSum {
        row: usize,
        sum: T,
    },
}

impl<T: Scalar> StochasticReport<T> {
    pub fn is_valid(&self) -> bool {
        matches!(self, StochasticReport::Valid)
    }
}

impl<T: fmt::Debug> fmt::Display for StochasticReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StochasticReport::Valid => write!(f, "valid"),
            StochasticReport::OutOfRange { row, column, value } => {
                write!(f, "entry ({row}, {column}) = {value:?} is outside [0, 1]")
            }
            StochasticReport::RowSum { row, sum } => write!(f, "row {row} sums to {sum:?}"),
        }
    }
}

/// Every entry in `[0, 1]` and every row summing to one. Ragged input is a
/// structural error.
pub fn check_row_stochastic<T: Scalar>(rows: &[Vec<T>]) -> Result<StochasticReport<T>> {
    if let Some(first) = rows.first() {
        check_shape(rows, first.len())?;
    }
    for (i, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if v.is_neg() || !v.approx_le(&T::one()) {
                return Ok(StochasticReport::OutOfRange { row: i, column: c, value: v.clone() });
            }
        }
        let total = sum(row);
        if !total.approx_eq(&T::one()) {
            return Ok(StochasticReport::RowSum { row: i, sum: total });
        }
    }
    Ok(StochasticReport::Valid)
}

/// Outcome of [`check_differential_privacy`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrivacyReport {
    Private,
    /// Results `row` and `row + 1` violate the ratio bound at column `column`.
    Violation {
        row: usize,
        column: usize,
    },
}

impl PrivacyReport {
    pub fn is_private(&self) -> bool {
        matches!(self, PrivacyReport::Private)
    }

    pub fn witness(&self) -> Option<(usize, usize)> {
        match self {
            PrivacyReport::Private => None,
            PrivacyReport::Violation { row, column } => Some((*row, *column)),
        }
    }
}

/// Ratio condition for adjacent results: `alpha * x[i+1][r] <= x[i][r]` and
/// `alpha * x[i][r] <= x[i+1][r]`. Two zeros pass.
pub fn check_differential_privacy<T: Scalar>(m: &Mechanism<T>, alpha: &PrivacyLevel) -> PrivacyReport {
    check_ratio_bound(m.rows(), &alpha.value::<T>())
}

/// Same test with an arbitrary `alpha` in `[0, 1]`, on raw rows.
pub fn check_ratio_bound<T: Scalar>(rows: &[Vec<T>], alpha: &T) -> PrivacyReport {
    for (i, pair) in rows.windows(2).enumerate() {
        if let Some(column) = pair_violation(&pair[0], &pair[1], alpha) {
            return PrivacyReport::Violation { row: i, column };
        }
    }
    PrivacyReport::Private
}

/// First column where two rows are not within a factor `alpha`.
pub fn pair_violation<T: Scalar>(a: &[T], b: &[T], alpha: &T) -> Option<usize> {
    a.iter().zip(b).position(|(u, v)| !mul(alpha, v).approx_le(u) || !mul(alpha, u).approx_le(v))
}

/// `(y ∘ x)[i][r] = Σ_{r'} x[i][r'] · y[r'][r]`.
pub fn compose<T: Scalar>(y: &Remap<T>, x: &Mechanism<T>) -> Result<Mechanism<T>> {
    if y.sources() != x.responses() {
        return Err(Error::ResponseMismatch(format!(
            "remap sources {:?} vs mechanism responses {:?}",
            y.sources(),
            x.responses()
        )));
    }
    let rows: Vec<Vec<T>> = x.rows().iter().map(|row| matmul_row(row, y.rows(), y.targets().len())).collect();
    let out = Mechanism::new(x.n(), y.targets().to_vec(), rows)?;
    debug_assert!(
        !check_row_stochastic(x.rows()).map(|r| r.is_valid()).unwrap_or(false)
            || check_row_stochastic(out.rows()).map(|r| r.is_valid()).unwrap_or(false),
        "composition broke row-stochasticity"
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::reference_vertex;
    use crate::ratio as q;

    #[test]
    fn privacy_level_bounds() {
        assert!(PrivacyLevel::from_ratio(1, 2).is_ok());
        assert!(PrivacyLevel::from_ratio(0, 1).is_err());
        assert!(PrivacyLevel::from_ratio(1, 1).is_err());
        assert!(PrivacyLevel::from_ratio(3, 2).is_err());
        assert!(PrivacyLevel::from_ratio(-1, 2).is_err());
        assert_eq!("2/4".parse::<PrivacyLevel>().unwrap().to_string(), "1/2");
    }

    #[test]
    fn identity_is_stochastic() {
        let m = Mechanism::<Rational>::identity(4);
        assert!(check_row_stochastic(m.rows()).unwrap().is_valid());
    }

    #[test]
    fn reference_vertex_is_stochastic_and_private() {
        let m = reference_vertex();
        assert!(check_row_stochastic(m.rows()).unwrap().is_valid());
        let half = PrivacyLevel::from_ratio(1, 2).unwrap();
        assert!(check_differential_privacy(&m, &half).is_private());
        // not private at the stronger level 3/4
        let strict = PrivacyLevel::from_ratio(3, 4).unwrap();
        assert!(!check_differential_privacy(&m, &strict).is_private());
    }

    #[test]
    fn deficit_row_reported() {
        let rows = vec![vec![q(1, 2), q(1, 4)]];
        assert_eq!(check_row_stochastic(&rows).unwrap(), StochasticReport::RowSum { row: 0, sum: q(3, 4) });
    }

    #[test]
    fn negative_entry_reported() {
        let rows = vec![vec![q(3, 2), q(-1, 2)]];
        assert!(matches!(check_row_stochastic(&rows).unwrap(), StochasticReport::OutOfRange { row: 0, column: 0, .. }));
    }

    #[test]
    fn ragged_rows_are_structural() {
        let rows = vec![vec![q(1, 1)], vec![q(1, 2), q(1, 2)]];
        assert!(matches!(check_row_stochastic(&rows), Err(Error::Dimension(_))));
        assert!(Mechanism::new(1, vec![0, 1], rows).is_err());
        assert!(Mechanism::new(2, vec![0], vec![vec![q(1, 1)]]).is_err());
    }

    #[test]
    fn constant_rows_private_at_any_level() {
        let row = vec![q(1, 5), q(3, 5), q(1, 5)];
        let m = Mechanism::over_results(vec![row.clone(), row.clone(), row]).unwrap();
        for (a, b) in [(1, 100), (1, 2), (99, 100)] {
            assert!(check_differential_privacy(&m, &PrivacyLevel::from_ratio(a, b).unwrap()).is_private());
        }
    }

    #[test]
    fn disjoint_rows_fail_with_first_witness() {
        let m = Mechanism::over_results(vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]]).unwrap();
        let report = check_differential_privacy(&m, &PrivacyLevel::from_ratio(1, 2).unwrap());
        assert_eq!(report.witness(), Some((0, 0)));
    }

    #[test]
    fn identity_remap_is_neutral() {
        let m = reference_vertex();
        let y = Remap::identity(m.responses().to_vec());
        assert_eq!(compose(&y, &m).unwrap(), m);
    }

    #[test]
    fn compose_rejects_mismatched_labels() {
        let m = reference_vertex();
        let y = Remap::<Rational>::identity(vec![0, 1, 2]);
        assert!(matches!(compose(&y, &m), Err(Error::ResponseMismatch(_))));
    }

    #[test]
    fn remap_classification() {
        let y = Remap::<Rational>::from_fn(vec![0, 1, 2], vec![0, 1, 2], |r| 2 - r).unwrap();
        assert!(y.is_deterministic());
        assert!(y.is_permutation());
        assert_eq!(y.target_of(0), Some(2));
        let collapse = Remap::<Rational>::from_fn(vec![0, 1, 2], vec![0, 1, 2], |_| 1).unwrap();
        assert!(!collapse.is_permutation());
        let mixed = Remap::new(vec![0], vec![0, 1], vec![vec![q(1, 2), q(1, 2)]]).unwrap();
        assert!(!mixed.is_deterministic());
        assert!(mixed.image().is_none());
        assert!(Remap::new(vec![0], vec![0, 1], vec![vec![q(1, 2), q(1, 4)]]).is_err());
    }

    #[test]
    fn remap_chaining_matches_sequential_composition() {
        let m = reference_vertex();
        let labels = m.responses().to_vec();
        let a = Remap::from_fn(labels.clone(), labels.clone(), |r| r.min(3)).unwrap();
        let b = Remap::from_fn(labels.clone(), labels, |r| 5 - r).unwrap();
        let chained = b.after(&a).unwrap();
        assert_eq!(compose(&chained, &m).unwrap(), compose(&b, &compose(&a, &m).unwrap()).unwrap());
    }

    #[test]
    fn column_permutation_moves_labels() {
        let m = reference_vertex();
        let p = m.permute_columns(&[5, 4, 3, 2, 1, 0]).unwrap();
        assert_eq!(p.responses(), &[5, 4, 3, 2, 1, 0]);
        assert_eq!(p.entry(0, 5), m.entry(0, 0));
        assert!(m.permute_columns(&[0, 0, 1, 2, 3, 4]).is_err());
    }

    #[test]
    fn float_instantiation_checks() {
        let m = reference_vertex().to_f64();
        assert!(check_row_stochastic(m.rows()).unwrap().is_valid());
        assert!(check_differential_privacy(&m, &PrivacyLevel::from_ratio(1, 2).unwrap()).is_private());
    }
}

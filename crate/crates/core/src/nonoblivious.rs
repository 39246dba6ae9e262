//! Mechanisms indexed by database rather than by query result.
//!
//! A database is `rows` values drawn from a domain of size `domain`; the
//! count query counts the rows whose value lies in a fixed predicate.
//! Databases are numbered `Σ_k v_k · domain^k` over rows `k = 0..rows`, so
//! with a two-value domain and predicate `{1}` a database's number is the
//! bit set of the rows holding 1.

use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::loss::UserModel;
use crate::lp::{FarkasCertificate, LinearProgram, LpOutcome, Sense};
use crate::mechanism::{check_row_stochastic, pair_violation, Mechanism, PrivacyLevel};
use crate::{ratio, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatabaseSpace {
    domain: usize,
    rows: usize,
    predicate: Vec<usize>,
    counts: Vec<usize>,
}

/// Largest number of databases a space may hold.
pub const MAX_DATABASES: usize = 1 << 16;

impl DatabaseSpace {
    pub fn new(domain: usize, rows: usize, mut predicate: Vec<usize>) -> Result<Self> {
        predicate.sort_unstable();
        predicate.dedup();
        if rows == 0 || domain < 2 {
            return Err(Error::DegenerateSpace("need at least one row and two domain values".into()));
        }
        if let Some(v) = predicate.iter().find(|&&v| v >= domain) {
            return Err(Error::DegenerateSpace(format!("predicate value {v} outside the domain")));
        }
        if predicate.is_empty() || predicate.len() == domain {
            return Err(Error::DegenerateSpace("predicate must hold for some but not all values".into()));
        }
        let size = domain
            .checked_pow(rows as u32)
            .filter(|&s| s <= MAX_DATABASES)
            .ok_or_else(|| Error::Capacity { candidates: format!("{domain}^{rows}"), limit: MAX_DATABASES as u64 })?;
        let counts = (0..size)
            .map(|d| {
                let mut d = d;
                let mut count = 0;
                for _ in 0..rows {
                    if predicate.binary_search(&(d % domain)).is_ok() {
                        count += 1;
                    }
                    d /= domain;
                }
                count
            })
            .collect();
        Ok(Self { domain, rows, predicate, counts })
    }

    /// Two-value domain with predicate `{1}`.
    pub fn binary(rows: usize) -> Result<Self> {
        Self::new(2, rows, vec![1])
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    /// Number of rows, which is also the largest query result.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn predicate(&self) -> &[usize] {
        &self.predicate
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Values of database `d`, row 0 first.
    pub fn values(&self, d: usize) -> Vec<usize> {
        let mut d = d;
        (0..self.rows)
            .map(|_| {
                let v = d % self.domain;
                d /= self.domain;
                v
            })
            .collect()
    }

    pub fn index_of(&self, values: &[usize]) -> Option<usize> {
        if values.len() != self.rows || values.iter().any(|&v| v >= self.domain) {
            return None;
        }
        Some(values.iter().rev().fold(0, |acc, &v| acc * self.domain + v))
    }

    /// Database whose rows in `ones` (1-based) hold value 1 and the rest 0.
    pub fn from_rows_holding_one(&self, ones: &[usize]) -> Option<usize> {
        let mut values = vec![0; self.rows];
        for &k in ones {
            *values.get_mut(k.checked_sub(1)?)? = 1;
        }
        self.index_of(&values)
    }

    /// Query result `f(d)`.
    pub fn count(&self, d: usize) -> usize {
        self.counts[d]
    }

    /// Databases with result `i`.
    pub fn class(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&d| self.counts[d] == i).collect()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        let (va, vb) = (self.values(a), self.values(b));
        va.iter().zip(&vb).filter(|(x, y)| x != y).count() == 1
    }

    /// Every unordered neighbor pair `(a, b)` with `a < b`.
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for a in 0..self.len() {
            let mut step = 1;
            let values = self.values(a);
            for &v in &values {
                for w in v + 1..self.domain {
                    pairs.push((a, a + (w - v) * step));
                }
                step *= self.domain;
            }
        }
        pairs.sort_unstable();
        pairs
    }
}

/// Row-stochastic matrix over databases × responses.
#[derive(Clone, Debug, PartialEq)]
pub struct FullMechanism {
    responses: Vec<i64>,
    rows: Vec<Vec<Rational>>,
}

impl FullMechanism {
    pub fn new(space: &DatabaseSpace, responses: Vec<i64>, rows: Vec<Vec<Rational>>) -> Result<Self> {
        if rows.len() != space.len() {
            return Err(Error::Dimension(format!("{} rows for {} databases", rows.len(), space.len())));
        }
        if let Some(d) = rows.iter().position(|r| r.len() != responses.len()) {
            return Err(Error::Dimension(format!(
                "row {d} has {} entries for {} responses",
                rows[d].len(),
                responses.len()
            )));
        }
        let report = check_row_stochastic(&rows)?;
        if !report.is_valid() {
            return Err(Error::Infeasible(report.to_string()));
        }
        Ok(Self { responses, rows })
    }

    /// Re-indexes an oblivious mechanism by database.
    pub fn lift(m: &Mechanism, space: &DatabaseSpace) -> Result<Self> {
        if m.n() != space.rows() {
            return Err(Error::Dimension(format!("mechanism covers 0..={}, space has {} rows", m.n(), space.rows())));
        }
        let rows = (0..space.len()).map(|d| m.row(space.count(d)).to_vec()).collect();
        Self::new(space, m.responses().to_vec(), rows)
    }

    pub fn responses(&self) -> &[i64] {
        &self.responses
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    pub fn row(&self, d: usize) -> &[Rational] {
        &self.rows[d]
    }

    /// First neighbor pair and response violating `alpha`-privacy.
    pub fn privacy_violation(&self, space: &DatabaseSpace, a: &PrivacyLevel) -> Option<(usize, usize, usize)> {
        space
            .neighbor_pairs()
            .into_iter()
            .find_map(|(d, e)| pair_violation(&self.rows[d], &self.rows[e], a.alpha()).map(|r| (d, e, r)))
    }

    pub fn is_private(&self, space: &DatabaseSpace, a: &PrivacyLevel) -> bool {
        self.privacy_violation(space, a).is_none()
    }

    /// Output distribution depends only on the query result.
    pub fn is_oblivious(&self, space: &DatabaseSpace) -> bool {
        (0..=space.rows()).all(|i| {
            let class = space.class(i);
            class.windows(2).all(|w| self.rows[w[0]] == self.rows[w[1]])
        })
    }
}

/// Averages the rows of each result class into an oblivious mechanism.
/// Privacy and worst-case loss are preserved or improved.
pub fn obliviate(x: &FullMechanism, space: &DatabaseSpace) -> Result<Mechanism> {
    if x.rows.len() != space.len() {
        return Err(Error::Dimension(format!("{} rows for {} databases", x.rows.len(), space.len())));
    }
    let width = x.responses.len();
    let rows = (0..=space.rows())
        .map(|i| {
            let class = space.class(i);
            if class.is_empty() {
                return Err(Error::DegenerateSpace(format!("no database has result {i}")));
            }
            let size = Rational::from_integer((class.len() as i64).into());
            let mut avg = vec![Rational::zero(); width];
            for &d in &class {
                for (acc, v) in avg.iter_mut().zip(&x.rows[d]) {
                    *acc += v;
                }
            }
            Ok(avg.into_iter().map(|v| v / &size).collect())
        })
        .collect::<Result<Vec<Vec<Rational>>>>()?;
    Mechanism::new(space.rows(), x.responses.clone(), rows)
}

fn row_loss(row: &[Rational], responses: &[i64], u: &UserModel, i: usize) -> Result<Rational> {
    let mut acc = Rational::zero();
    for (v, &r) in row.iter().zip(responses) {
        if !v.is_zero() {
            acc += v * u.loss().value(i as i64, r)?;
        }
    }
    Ok(acc)
}

/// Largest expected loss over database priors inducing `u`'s result prior:
/// within each class, all weight sits on the worst database.
pub fn worst_case_expected_loss(x: &FullMechanism, u: &UserModel, space: &DatabaseSpace) -> Result<Rational> {
    if u.n() != space.rows() {
        return Err(Error::Dimension(format!("prior covers 0..={}, space has {} rows", u.n(), space.rows())));
    }
    let mut total = Rational::zero();
    for (i, p) in u.prior().iter().enumerate() {
        if p.is_zero() {
            continue;
        }
        let worst = space
            .class(i)
            .into_iter()
            .map(|d| row_loss(&x.rows[d], &x.responses, u, i))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .ok_or_else(|| Error::DegenerateSpace(format!("no database has result {i}")))?;
        total += p * worst;
    }
    Ok(total)
}

/// Expected loss under an explicit database prior `q` (one weight per
/// database).
pub fn database_prior_loss(
    x: &FullMechanism,
    u: &UserModel,
    space: &DatabaseSpace,
    q: &[Rational],
) -> Result<Rational> {
    let mut total = Rational::zero();
    for (d, w) in q.iter().enumerate() {
        if !w.is_zero() {
            total += w * row_loss(&x.rows[d], &x.responses, u, space.count(d))?;
        }
    }
    Ok(total)
}

/// Random `alpha`-private full mechanism over responses `0..=rows`.
///
/// Each draw weights response `r` at database `d` by `c_r β^{g_r(d)}`
/// with `g_r(d)` the sum of per-row steps in `{-1, 0, 1}` over rows of `d`
/// holding a nonzero value, and
/// `β = (1 + alpha) / 2`, so neighbors' weights differ by at most `β` and
/// normalized rows by at most `β² >= alpha`. Two draws are mixed, which
/// keeps privacy because the constraints are linear.
pub fn random_private_mechanism<R: Rng>(rng: &mut R, space: &DatabaseSpace, a: &PrivacyLevel) -> FullMechanism {
    let beta = (Rational::one() + a.alpha()) / ratio(2, 1);
    let width = space.rows() + 1;
    let draw = |rng: &mut R| -> Vec<Vec<Rational>> {
        let scale: Vec<Rational> = (0..width).map(|_| ratio(rng.gen_range(1..=8), 1)).collect();
        let steps: Vec<Vec<i32>> =
            (0..width).map(|_| (0..space.rows()).map(|_| rng.gen_range(-1..=1)).collect()).collect();
        (0..space.len())
            .map(|d| {
                let values = space.values(d);
                let weights: Vec<Rational> = (0..width)
                    .map(|r| {
                        let g: i32 = values.iter().zip(&steps[r]).map(|(&v, &s)| s * i32::from(v != 0)).sum();
                        let power = num_traits::pow(beta.clone(), g.unsigned_abs() as usize);
                        let w = if g >= 0 { power } else { Rational::one() / power };
                        &scale[r] * w
                    })
                    .collect();
                let total: Rational = weights.iter().sum();
                weights.into_iter().map(|w| w / &total).collect()
            })
            .collect()
    };
    let (first, second) = (draw(rng), draw(rng));
    let lambda = ratio(rng.gen_range(0..=4), 4);
    let rows = first
        .into_iter()
        .zip(second)
        .map(|(p, q)| p.into_iter().zip(q).map(|(x, y)| &lambda * x + (Rational::one() - &lambda) * y).collect())
        .collect();
    FullMechanism::new(space, (0..width as i64).collect(), rows).expect("stochastic by construction")
}

/// Maximum of [`database_prior_loss`] over the extensions of `u`'s prior
/// that put each result's weight on a single database, by enumeration.
/// The maximum over all extensions is attained at one of these.
pub fn adversarial_extension_loss(x: &FullMechanism, u: &UserModel, space: &DatabaseSpace) -> Result<Rational> {
    let classes: Vec<Vec<usize>> = (0..=space.rows()).map(|i| space.class(i)).collect();
    let mut choice = vec![0usize; classes.len()];
    let mut best: Option<Rational> = None;
    loop {
        let mut q = vec![Rational::zero(); space.len()];
        for (i, &k) in choice.iter().enumerate() {
            q[classes[i][k]] += &u.prior()[i];
        }
        let loss = database_prior_loss(x, u, space, &q)?;
        best = Some(best.map_or(loss.clone(), |b| b.max(loss)));
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return Ok(best.expect("at least one extension"));
            }
            choice[pos] += 1;
            if choice[pos] < classes[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// One random trial of the averaging construction.
#[derive(Clone, Debug)]
pub struct ObliviationRecord {
    pub rows: usize,
    pub alpha: PrivacyLevel,
    pub input_private: bool,
    pub output_private: bool,
    /// Worst-case loss of the averaged mechanism.
    pub averaged_loss: Rational,
    /// Worst-case loss of the input, from the adversarial extensions.
    pub original_loss: Rational,
    /// Closed-form worst case agrees with the enumerated one.
    pub oracle_agrees: bool,
}

impl ObliviationRecord {
    pub fn passed(&self) -> bool {
        self.input_private && self.output_private && self.oracle_agrees && self.averaged_loss <= self.original_loss
    }
}

/// Random private full mechanisms on the two-value space with `rows` drawn
/// from `row_choices`, each averaged and compared against its input.
pub fn obliviation_sweep(
    row_choices: &[usize],
    alphas: &[PrivacyLevel],
    trials: usize,
    seed: u64,
    digits: u32,
) -> Result<Vec<ObliviationRecord>> {
    if row_choices.is_empty() || alphas.is_empty() {
        return Err(Error::Dimension("need at least one row count and one alpha".into()));
    }
    (0..trials)
        .map(|t| {
            let mut rng = crate::analysis::trial_rng(seed, t);
            let rows = row_choices[rng.gen_range(0..row_choices.len())];
            let alpha = alphas[rng.gen_range(0..alphas.len())].clone();
            let space = DatabaseSpace::binary(rows)?;
            let x = random_private_mechanism(&mut rng, &space, &alpha);
            let u = crate::analysis::random_user(&mut rng, rows, digits);
            let averaged = obliviate(&x, &space)?;
            let lifted = FullMechanism::lift(&averaged, &space)?;
            let original_loss = adversarial_extension_loss(&x, &u, &space)?;
            let oracle_agrees = original_loss == worst_case_expected_loss(&x, &u, &space)?;
            Ok(ObliviationRecord {
                rows,
                input_private: x.is_private(&space, &alpha),
                output_private: crate::mechanism::check_differential_privacy(&averaged, &alpha).is_private(),
                averaged_loss: worst_case_expected_loss(&lifted, &u, &space)?,
                original_loss,
                oracle_agrees,
                alpha,
            })
        })
        .collect()
}

/// Response labels of the two-user counterexample.
pub const COUNTEREXAMPLE_RESPONSES: [&str; 4] = ["l", "m", "n", "o"];

/// How the four responses collapse onto the two-response mechanisms: the
/// first user merges `{l, n}` and `{m, o}`, the second `{l, o}` and `{m, n}`.
const FIRST_USER_GROUPS: [[usize; 2]; 2] = [[0, 2], [1, 3]];
const SECOND_USER_GROUPS: [[usize; 2]; 2] = [[0, 3], [1, 2]];

/// The counterexample's prescribed two-response rows. The second user's
/// rows are the first user's with databases `{1} ↔ {2}` and
/// `{1,3} ↔ {2,3}` exchanged.
type PrescribedRows = Vec<(Vec<usize>, [Rational; 2])>;

fn prescribed_rows() -> (PrescribedRows, PrescribedRows) {
    let first = crate::fixtures::counterexample_rows();
    let swap = |rows: &[usize]| -> Vec<usize> {
        rows.iter()
            .map(|&k| match k {
                1 => 2,
                2 => 1,
                other => other,
            })
            .collect::<Vec<_>>()
    };
    let mut second: PrescribedRows = first
        .iter()
        .map(|(db, row)| {
            let mut label = swap(db);
            label.sort_unstable();
            (label, row.clone())
        })
        .collect();
    second.sort_by(|a, b| a.0.cmp(&b.0));
    (first, second)
}

/// LP over the 32 entries `x[d][r]` of a mechanism on the three-row binary
/// space with four responses. It asks for a mechanism that both users can
/// remap to their own prescribed optimum. `alpha = None` drops the privacy
/// rows.
pub fn counterexample_program(alpha: Option<&Rational>) -> Result<LinearProgram<Rational>> {
    let space = DatabaseSpace::binary(3)?;
    let width = COUNTEREXAMPLE_RESPONSES.len();
    let var = |d: usize, r: usize| d * width + r;
    let one = Rational::one();
    let mut lp = LinearProgram::new(space.len() * width);
    for d in 0..space.len() {
        lp.add_constraint(
            (0..width).map(|r| (var(d, r), one.clone())).collect(),
            Sense::Eq,
            one.clone(),
            format!("sum[{d}]"),
        )?;
    }
    if let Some(alpha) = alpha {
        for (d, e) in space.neighbor_pairs() {
            for (r, label) in COUNTEREXAMPLE_RESPONSES.iter().enumerate() {
                lp.add_constraint(
                    vec![(var(d, r), one.clone()), (var(e, r), -alpha.clone())],
                    Sense::Ge,
                    Rational::zero(),
                    format!("dp[{d},{e},{label}]"),
                )?;
                lp.add_constraint(
                    vec![(var(d, r), alpha.clone()), (var(e, r), -one.clone())],
                    Sense::Le,
                    Rational::zero(),
                    format!("dp[{e},{d},{label}]"),
                )?;
            }
        }
    }
    let (first, second) = prescribed_rows();
    for (tag, groups, rows) in [("first", FIRST_USER_GROUPS, first), ("second", SECOND_USER_GROUPS, second)] {
        for (db, target) in rows {
            let d = space.from_rows_holding_one(&db).expect("valid database");
            for (k, group) in groups.iter().enumerate() {
                lp.add_constraint(
                    group.iter().map(|&r| (var(d, r), one.clone())).collect(),
                    Sense::Eq,
                    target[k].clone(),
                    format!("{tag}[{d}->{}]", k + 1),
                )?;
            }
        }
    }
    lp.push_objective(vec![Rational::zero(); space.len() * width])?;
    Ok(lp)
}

/// Outcome of the counterexample LP with a re-verified certificate.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub program: LinearProgram<Rational>,
    pub certificate: FarkasCertificate<Rational>,
}

impl Counterexample {
    pub fn verifies(&self) -> bool {
        self.certificate.verify(&self.program)
    }

    /// `(row label, multiplier)` for every row the certificate uses.
    pub fn support(&self) -> Vec<(String, Rational)> {
        self.certificate
            .multipliers
            .iter()
            .zip(self.program.constraints())
            .filter(|(z, _)| !z.is_zero())
            .map(|(z, c)| (c.label.clone(), z.clone()))
            .collect()
    }
}

/// Shows that no 1/2-private mechanism serves both users: the LP is
/// infeasible and the Farkas certificate is returned. Errors if the LP
/// turns out feasible.
pub fn check_counterexample_infeasibility() -> Result<Counterexample> {
    counterexample_at(&ratio(1, 2))
}

/// The same check at an arbitrary privacy ratio (including 1).
pub fn counterexample_at(alpha: &Rational) -> Result<Counterexample> {
    let program = counterexample_program(Some(alpha))?;
    match program.solve()? {
        LpOutcome::Infeasible(certificate) => Ok(Counterexample { program, certificate }),
        LpOutcome::Optimal(_) => Err(Error::Lp("counterexample LP is feasible".into())),
        LpOutcome::Unbounded => Err(Error::Lp("counterexample LP is unbounded".into())),
    }
}

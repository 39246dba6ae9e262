//! Constraint matrices of mechanisms and what they say about LP vertices.
//!
//! For a feasible mechanism `x` and adjacent results `(i, i + 1)`, cell
//! `(i, r)` of the constraint matrix records which privacy constraint on
//! column `r` is tight:
//!
//! * `Z`: both entries are zero,
//! * `Down` (`v`): `x[i+1][r] = alpha x[i][r]`,
//! * `Up` (`^`): `x[i][r] = alpha x[i+1][r]`,
//! * `S`: neither (slack).
//!
//! An optimal vertex has a rigid pattern: rows read `v* S? ^*`, the number
//! of `v` grows down the rows, and there are exactly as many `S` cells as
//! all-zero columns. That pattern names a deterministic remap `y` with
//! `y ∘ G = x`, which is how every optimum is rebuilt from the geometric
//! mechanism.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::{expected_loss, LossFunction, LossKind, UserModel};
use crate::mechanism::{check_differential_privacy, check_row_stochastic, compose, Mechanism, PrivacyLevel, Remap};
use crate::mechanisms::{truncated_geometric, GeometricSpec};
use crate::optlp::{VertexSolution, VertexSolver};
use crate::precision;
use crate::remap::{brute_force_optimal_remap, optimal_remap};
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Zero,
    Down,
    Up,
    Slack,
}

impl Symbol {
    pub fn as_char(self) -> char {
        match self {
            Symbol::Zero => 'Z',
            Symbol::Down => 'v',
            Symbol::Up => '^',
            Symbol::Slack => 'S',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'Z' => Some(Symbol::Zero),
            'v' => Some(Symbol::Down),
            '^' => Some(Symbol::Up),
            'S' => Some(Symbol::Slack),
            _ => None,
        }
    }
}

/// `n × (n + 1)` grid of [`Symbol`]s; every column is all `Z` or `Z`-free.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConstraintMatrix {
    grid: Vec<Vec<Symbol>>,
}

pub const LEGEND: &str = "legend: Z both zero, v falls by alpha, ^ rises by 1/alpha, S slack";

impl ConstraintMatrix {
    pub fn from_grid(grid: Vec<Vec<Symbol>>) -> Result<Self> {
        let width = grid.first().map_or(0, Vec::len);
        if grid.is_empty() || width != grid.len() + 1 || grid.iter().any(|row| row.len() != width) {
            return Err(Error::Dimension("constraint matrix must be n × (n + 1) with n >= 1".into()));
        }
        for r in 0..width {
            let zeros = grid.iter().filter(|row| row[r] == Symbol::Zero).count();
            if zeros != 0 && zeros != grid.len() {
                return Err(Error::Structure(format!("column {r} mixes Z with other symbols")));
            }
        }
        Ok(Self { grid })
    }

    /// Parses the text rendering (one row per line; spaces and a legend
    /// line are ignored).
    pub fn parse(text: &str) -> Result<Self> {
        let grid = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("legend"))
            .map(|l| {
                l.chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| Symbol::from_char(c).ok_or_else(|| Error::Structure(format!("unknown symbol {c:?}"))))
                    .collect()
            })
            .collect::<Result<Vec<Vec<Symbol>>>>()?;
        Self::from_grid(grid)
    }

    /// Number of adjacent result pairs, `n`.
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[Vec<Symbol>] {
        &self.grid
    }

    pub fn get(&self, i: usize, r: usize) -> Symbol {
        self.grid[i][r]
    }

    pub fn is_zero_column(&self, r: usize) -> bool {
        self.grid[0][r] == Symbol::Zero
    }

    pub fn zero_columns(&self) -> Vec<usize> {
        (0..=self.n()).filter(|&r| self.is_zero_column(r)).collect()
    }

    pub fn non_zero_columns(&self) -> Vec<usize> {
        (0..=self.n()).filter(|&r| !self.is_zero_column(r)).collect()
    }

    /// Row `i` restricted to the non-`Z` columns.
    pub fn reduced_row(&self, i: usize) -> Vec<Symbol> {
        self.non_zero_columns().into_iter().map(|r| self.grid[i][r]).collect()
    }

    /// Space-separated rows followed by a legend line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in &self.grid {
            let line: Vec<String> = row.iter().map(|s| s.as_char().to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.push_str(LEGEND);
        out.push('\n');
        out
    }
}

impl fmt::Display for ConstraintMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Constraint matrix of a feasible mechanism over `0..=n`, compared exactly.
pub fn constraint_matrix(x: &Mechanism, a: &PrivacyLevel) -> Result<ConstraintMatrix> {
    if !x.has_range_n() {
        return Err(Error::Dimension("constraint matrices need a mechanism with range 0..=n".into()));
    }
    if x.n() < 1 {
        return Err(Error::Dimension("constraint matrices need n >= 1".into()));
    }
    if let Some(report) = Some(check_row_stochastic(x.rows())?).filter(|r| !r.is_valid()) {
        return Err(Error::Infeasible(report.to_string()));
    }
    if let Some((i, r)) = check_differential_privacy(x, a).witness() {
        return Err(Error::Infeasible(format!("privacy violated between rows {i} and {} in column {r}", i + 1)));
    }
    let alpha = a.alpha();
    let grid = (0..x.n())
        .map(|i| {
            (0..=x.n())
                .map(|r| {
                    let (hi, lo) = (x.entry(i, r), x.entry(i + 1, r));
                    if hi.is_zero() && lo.is_zero() {
                        Symbol::Zero
                    } else if &(alpha * hi) == lo {
                        Symbol::Down
                    } else if &(alpha * lo) == hi {
                        Symbol::Up
                    } else {
                        Symbol::Slack
                    }
                })
                .collect()
        })
        .collect();
    ConstraintMatrix::from_grid(grid)
}

/// Counts of slack cells and zero columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlackAccounting {
    /// Total number of `S` cells.
    pub s: usize,
    /// Number of all-`Z` columns.
    pub z: usize,
    /// Indices of the non-`Z` columns, in order.
    pub columns: Vec<usize>,
    /// `S` count of the `i`-th non-`Z` column.
    pub per_column: Vec<usize>,
    /// Prefix sums of `per_column`; `prefix[i]` includes column `i`.
    pub prefix: Vec<usize>,
}

impl SlackAccounting {
    pub fn from_matrix(c: &ConstraintMatrix) -> Self {
        let columns = c.non_zero_columns();
        let per_column: Vec<usize> =
            columns.iter().map(|&r| (0..c.n()).filter(|&i| c.get(i, r) == Symbol::Slack).count()).collect();
        let prefix = per_column
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        Self { s: per_column.iter().sum(), z: c.n() + 1 - columns.len(), columns, per_column, prefix }
    }

    /// Prefix sum before the `i`-th non-`Z` column.
    fn before(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.prefix[i - 1]
        }
    }
}

/// The structural properties every optimal vertex's matrix has.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Property {
    /// No row is all `v` or all `^` over the non-`Z` columns.
    NoMonotoneRow,
    /// Every row reads `v* S? ^*` over the non-`Z` columns.
    RowShape,
    /// Row `i + 1` has more `v` than row `i`, or at least as many if row
    /// `i + 1` holds an `S`.
    DownGrowth,
    /// `s >= z`.
    SlackCoversZeros,
    /// `s == z`.
    SlackEqualsZeros,
    /// The `i`-th non-`Z` column is `^` for its first `i + S_{i-1}` rows,
    /// then `s_i` cells `S`, then `v`.
    ColumnPattern,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::NoMonotoneRow,
        Property::RowShape,
        Property::DownGrowth,
        Property::SlackCoversZeros,
        Property::SlackEqualsZeros,
        Property::ColumnPattern,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::NoMonotoneRow => "no_monotone_row",
            Property::RowShape => "row_shape",
            Property::DownGrowth => "down_growth",
            Property::SlackCoversZeros => "slack_covers_zeros",
            Property::SlackEqualsZeros => "slack_equals_zeros",
            Property::ColumnPattern => "column_pattern",
        }
    }
}

/// Where a property failed. Rows are adjacent-pair indices, columns are
/// responses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Witness {
    pub row: Option<usize>,
    pub column: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyOutcome {
    pub property: Property,
    pub witness: Option<Witness>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureReport {
    pub outcomes: Vec<PropertyOutcome>,
    pub s: usize,
    pub z: usize,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(PropertyOutcome::passed)
    }

    pub fn outcome(&self, p: Property) -> &PropertyOutcome {
        self.outcomes.iter().find(|o| o.property == p).expect("every property is checked")
    }

    pub fn failures(&self) -> Vec<Property> {
        self.outcomes.iter().filter(|o| !o.passed()).map(|o| o.property).collect()
    }
}

fn row_witness(i: usize) -> Option<Witness> {
    Some(Witness { row: Some(i), column: None })
}

fn count(row: &[Symbol], s: Symbol) -> usize {
    row.iter().filter(|&&x| x == s).count()
}

fn has_row_shape(row: &[Symbol]) -> bool {
    // v* S? ^*: once an S or ^ appears, only ^ may follow
    let mut past_downs = false;
    for s in row {
        match s {
            Symbol::Down | Symbol::Slack if past_downs => return false,
            Symbol::Down => {}
            Symbol::Slack | Symbol::Up => past_downs = true,
            Symbol::Zero => return false,
        }
    }
    true
}

/// Checks every structural property; each outcome carries a witness when it
/// fails.
pub fn validate_vertex_structure(c: &ConstraintMatrix, acc: &SlackAccounting) -> StructureReport {
    let n = c.n();
    let rows: Vec<Vec<Symbol>> = (0..n).map(|i| c.reduced_row(i)).collect();
    let mut outcomes = Vec::with_capacity(Property::ALL.len());

    let monotone =
        rows.iter().position(|row| row.iter().all(|&s| s == Symbol::Down) || row.iter().all(|&s| s == Symbol::Up));
    outcomes.push(PropertyOutcome { property: Property::NoMonotoneRow, witness: monotone.and_then(row_witness) });

    let shape = rows.iter().position(|row| !has_row_shape(row));
    outcomes.push(PropertyOutcome { property: Property::RowShape, witness: shape.and_then(row_witness) });

    let growth = (0..n.saturating_sub(1)).find(|&i| {
        let (now, next) = (count(&rows[i], Symbol::Down), count(&rows[i + 1], Symbol::Down));
        if rows[i + 1].contains(&Symbol::Slack) {
            next < now
        } else {
            next < now + 1
        }
    });
    outcomes
        .push(PropertyOutcome { property: Property::DownGrowth, witness: growth.map(|i| i + 1).and_then(row_witness) });

    let none = Witness { row: None, column: None };
    outcomes.push(PropertyOutcome { property: Property::SlackCoversZeros, witness: (acc.s < acc.z).then_some(none) });
    outcomes.push(PropertyOutcome { property: Property::SlackEqualsZeros, witness: (acc.s != acc.z).then_some(none) });

    let mut pattern = None;
    'columns: for (k, &col) in acc.columns.iter().enumerate() {
        let ups = k + acc.before(k);
        for i in 0..n {
            let expected = if i < ups {
                Symbol::Up
            } else if i < ups + acc.per_column[k] {
                Symbol::Slack
            } else {
                Symbol::Down
            };
            if c.get(i, col) != expected {
                pattern = Some(Witness { row: Some(i), column: Some(col) });
                break 'columns;
            }
        }
    }
    outcomes.push(PropertyOutcome { property: Property::ColumnPattern, witness: pattern });

    StructureReport { outcomes, s: acc.s, z: acc.z }
}

/// Deterministic remap of `G`'s responses `0..=n` read off a valid vertex
/// pattern: responses `i + S_{i-1} ..= i + S_i` go to the `i`-th non-`Z`
/// column.
pub fn derive_remap_from_constraint_matrix(c: &ConstraintMatrix, acc: &SlackAccounting, n: usize) -> Result<Remap> {
    if c.n() != n {
        return Err(Error::Dimension(format!("matrix has {} rows, expected {n}", c.n())));
    }
    let report = validate_vertex_structure(c, acc);
    if let Some(p) = report.failures().first() {
        return Err(Error::Structure(format!("property {} fails", p.name())));
    }
    let mut image = vec![usize::MAX; n + 1];
    for (k, &col) in acc.columns.iter().enumerate() {
        for slot in image.iter_mut().take(k + acc.prefix[k] + 1).skip(k + acc.before(k)) {
            *slot = col;
        }
    }
    if image.contains(&usize::MAX) {
        return Err(Error::Structure("derived map leaves a response unassigned".into()));
    }
    let labels: Vec<i64> = (0..=n as i64).collect();
    Remap::deterministic(labels.clone(), labels, &image)
}

/// One check that the Bayes remap of `G` is as good as the LP optimum.
#[derive(Clone, Debug)]
pub struct FactorizationRecord {
    pub n: usize,
    pub alpha: PrivacyLevel,
    pub user: UserModel,
    /// Loss of the user's Bayes remap applied to `G`.
    pub remap_loss: Rational,
    /// Optimal objective of the user LP.
    pub lp_loss: Rational,
    pub difference: Rational,
    pub losses_agree: bool,
    pub structure: StructureReport,
    /// The remap derived from the vertex's constraint matrix, applied to
    /// `G`, reproduces the vertex exactly.
    pub reconstructs: bool,
    /// High-precision optimality recheck passed (always true for exact
    /// losses).
    pub certified: bool,
    pub alternative_optima: usize,
    pub vertex: Mechanism,
}

impl FactorizationRecord {
    pub fn passed(&self) -> bool {
        self.losses_agree && self.structure.all_pass() && self.reconstructs && self.certified
    }
}

/// Largest `|L1 - L2|` accepted for inexact losses: `10^-30`.
pub const INEXACT_TOLERANCE_DIGITS: u32 = 30;

pub fn verify_factorization(u: &UserModel, a: &PrivacyLevel, n: usize) -> Result<FactorizationRecord> {
    verify_factorization_with(&VertexSolver::new(), u, a, n)
}

/// [`verify_factorization`] reusing a solver's cached factorizations.
pub fn verify_factorization_with(
    solver: &VertexSolver,
    u: &UserModel,
    a: &PrivacyLevel,
    n: usize,
) -> Result<FactorizationRecord> {
    let g = truncated_geometric(&GeometricSpec::new(a.clone(), n)?);
    let y = optimal_remap(&g, u)?;
    let remap_loss = expected_loss(&compose(&y, &g)?, u)?;
    let solution: VertexSolution = solver.solve(u, a, n)?;
    let lp_loss = solution.objective.clone();
    let difference = &remap_loss - &lp_loss;
    let losses_agree = if u.loss().is_exact() {
        difference.is_zero()
    } else {
        difference.abs() <= precision::ten_to_minus(INEXACT_TOLERANCE_DIGITS)
    };
    let c = constraint_matrix(&solution.mechanism, a)?;
    let acc = SlackAccounting::from_matrix(&c);
    let structure = validate_vertex_structure(&c, &acc);
    let reconstructs = derive_remap_from_constraint_matrix(&c, &acc, n)
        .and_then(|derived| compose(&derived, &g))
        .is_ok_and(|rebuilt| rebuilt == solution.mechanism);
    Ok(FactorizationRecord {
        n,
        alpha: a.clone(),
        user: u.clone(),
        remap_loss,
        lp_loss,
        difference,
        losses_agree,
        structure,
        reconstructs,
        certified: solution.check.as_ref().is_none_or(|c| c.certified),
        alternative_optima: solution.alternative_optima,
        vertex: solution.mechanism,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessVerdict {
    /// Bayes remap of the candidate for the uniform user with binary loss.
    pub remap: Remap,
    pub induces_geometric: bool,
    pub is_permutation: bool,
}

impl UniquenessVerdict {
    /// The candidate is `G` up to a relabeling of its responses.
    pub fn equivalent(&self) -> bool {
        self.induces_geometric && self.is_permutation
    }
}

/// Decides whether `candidate` is a response permutation of `G`, using the
/// uniform-prior binary-loss user for whom `G` is the unique optimum.
pub fn verify_uniqueness(a: &PrivacyLevel, n: usize, candidate: &Mechanism) -> Result<UniquenessVerdict> {
    if candidate.n() != n || !candidate.has_range_n() {
        return Err(Error::Dimension(format!("candidate must have results and range 0..={n}")));
    }
    if let Some((i, r)) = check_differential_privacy(candidate, a).witness() {
        return Err(Error::Infeasible(format!("candidate violates privacy at ({i}, {r})")));
    }
    let u = UserModel::uniform(n, LossFunction::binary());
    let g = truncated_geometric(&GeometricSpec::new(a.clone(), n)?);
    let remap = optimal_remap(candidate, &u)?;
    let induces_geometric = compose(&remap, candidate)? == g;
    let is_permutation = remap.is_permutation();
    Ok(UniquenessVerdict { remap, induces_geometric, is_permutation })
}

/// Exponents drawn for random power-loss users.
pub const RANDOM_EXPONENTS: [(i64, i64); 4] = [(1, 2), (3, 2), (5, 2), (4, 3)];

/// Random prior over `0..=n` with denominator dividing 64. Each entry is
/// forced to zero with probability 1/4 (at least one stays positive); the
/// remaining entries split 64 units at random cut points.
pub fn random_prior<R: Rng>(rng: &mut R, n: usize) -> Vec<Rational> {
    const UNITS: usize = 64;
    let mut support: Vec<usize> = (0..=n).filter(|_| !rng.gen_bool(0.25)).collect();
    if support.is_empty() {
        support.push(rng.gen_range(0..=n));
    }
    let mut cuts: Vec<usize> = (1..UNITS).collect::<Vec<_>>();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(support.len() - 1).collect();
    cuts.sort_unstable();
    cuts.push(UNITS);
    let mut prior = vec![Rational::zero(); n + 1];
    let mut last = 0;
    for (&i, &cut) in support.iter().zip(&cuts) {
        prior[i] = crate::ratio((cut - last) as i64, UNITS as i64);
        last = cut;
    }
    prior
}

/// Loss drawn uniformly from absolute, squared, binary and power.
pub fn random_loss<R: Rng>(rng: &mut R, digits: u32) -> LossFunction {
    let kind = match rng.gen_range(0..4) {
        0 => LossKind::Absolute,
        1 => LossKind::Squared,
        2 => LossKind::Binary,
        _ => {
            let (p, q) = RANDOM_EXPONENTS[rng.gen_range(0..RANDOM_EXPONENTS.len())];
            LossKind::Power { exponent: crate::ratio(p, q) }
        }
    };
    LossFunction::with_digits(kind, digits).expect("valid random loss")
}

pub fn random_user<R: Rng>(rng: &mut R, n: usize, digits: u32) -> UserModel {
    let prior = random_prior(rng, n);
    UserModel::new(prior, random_loss(rng, digits)).expect("valid random user")
}

/// Independent per-trial generator, so that trials can run in any order.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// `n` is drawn uniformly from `1..=max_n`.
    pub max_n: usize,
    pub alphas: Vec<PrivacyLevel>,
    pub trials: usize,
    pub seed: u64,
    pub digits: u32,
}

impl SweepConfig {
    fn draw<R: Rng>(&self, rng: &mut R) -> (usize, PrivacyLevel) {
        let n = rng.gen_range(1..=self.max_n);
        let a = self.alphas[rng.gen_range(0..self.alphas.len())].clone();
        (n, a)
    }

    fn check(&self) -> Result<()> {
        if self.max_n < 1 || self.alphas.is_empty() {
            return Err(Error::Dimension("a sweep needs max_n >= 1 and at least one alpha".into()));
        }
        Ok(())
    }
}

/// Runs [`verify_factorization`] on `trials` random users in parallel.
/// Records come back in trial order and depend only on the config.
pub fn factorization_sweep(config: &SweepConfig) -> Result<Vec<FactorizationRecord>> {
    config.check()?;
    let solver = VertexSolver::new();
    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.seed, t);
            let (n, a) = config.draw(&mut rng);
            let u = random_user(&mut rng, n, config.digits);
            verify_factorization_with(&solver, &u, &a, n)
        })
        .collect()
}

/// One comparison of the Bayes remap against exhaustive search.
#[derive(Clone, Debug)]
pub struct RemapRecord {
    pub n: usize,
    pub mechanism: Mechanism,
    pub user: UserModel,
    pub bayes_loss: Rational,
    pub brute_force_loss: Rational,
    pub passed: bool,
}

/// Random row-stochastic matrix over `0..=n` whose entries have small
/// denominators; some entries are zero.
pub fn random_mechanism<R: Rng>(rng: &mut R, n: usize) -> Mechanism {
    let rows = (0..=n)
        .map(|_| {
            let weights: Vec<i64> = (0..=n).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..=9) }).collect();
            let total: i64 = weights.iter().sum();
            if total == 0 {
                let mut row = vec![Rational::zero(); n + 1];
                row[rng.gen_range(0..=n)] = Rational::one();
                row
            } else {
                weights.iter().map(|&w| crate::ratio(w, total)).collect()
            }
        })
        .collect();
    Mechanism::over_results(rows).expect("square")
}

/// Bayes remap versus brute force on random instances: even trials use `G`
/// at a random alpha, odd trials a random stochastic matrix.
pub fn remap_oracle_sweep(config: &SweepConfig) -> Result<Vec<RemapRecord>> {
    config.check()?;
    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.seed, t);
            let (n, a) = config.draw(&mut rng);
            let mechanism = if t % 2 == 0 {
                truncated_geometric(&GeometricSpec::new(a, n)?)
            } else {
                random_mechanism(&mut rng, n)
            };
            let user = random_user(&mut rng, n, config.digits);
            let bayes_loss = expected_loss(&compose(&optimal_remap(&mechanism, &user)?, &mechanism)?, &user)?;
            let (_, brute_force_loss) = brute_force_optimal_remap(&mechanism, &user)?;
            let passed = if user.loss().is_exact() {
                bayes_loss == brute_force_loss
            } else {
                (&bayes_loss - &brute_force_loss).abs() <= precision::ten_to_minus(INEXACT_TOLERANCE_DIGITS)
            };
            Ok(RemapRecord { n, mechanism, user, bayes_loss, brute_force_loss, passed })
        })
        .collect()
}

/// Largest `n` for which [`enumerate_vertices`] runs.
pub const ENUMERATION_MAX_N: usize = 3;

/// Every vertex of the `(alpha, n)` feasible region, found independently of
/// the simplex solver.
///
/// Columns of a feasible mechanism are all zero or all positive. Fixing the
/// zero columns, the slack cells and a tight direction for every other cell
/// makes each remaining column a scaled geometric pattern per run between
/// slack cells; the row sums then determine the scales. Every vertex arises
/// from its own pattern with a unique solution, and every feasible unique
/// solution is a vertex, so collecting the feasible ones is complete.
pub fn enumerate_vertices(a: &PrivacyLevel, n: usize) -> Result<Vec<Mechanism>> {
    if !(1..=ENUMERATION_MAX_N).contains(&n) {
        return Err(Error::Capacity {
            candidates: format!("vertex patterns at n = {n}"),
            limit: ENUMERATION_MAX_N as u64,
        });
    }
    let width = n + 1;
    let mut found = BTreeSet::new();
    for zmask in 0u32..(1 << width) {
        let columns: Vec<usize> = (0..width).filter(|r| zmask & (1 << r) == 0).collect();
        if columns.is_empty() {
            continue;
        }
        let z = width - columns.len();
        let cells: Vec<(usize, usize)> = columns.iter().flat_map(|&r| (0..n).map(move |i| (i, r))).collect();
        for smask in 0u64..(1 << cells.len()) {
            if smask.count_ones() as usize > z {
                continue;
            }
            let tight: Vec<usize> = (0..cells.len()).filter(|k| smask & (1 << k) == 0).collect();
            for dmask in 0u64..(1 << tight.len()) {
                let mut grid = vec![vec![Symbol::Zero; width]; n];
                for (k, &(i, r)) in cells.iter().enumerate() {
                    grid[i][r] = Symbol::Slack;
                    if let Some(pos) = tight.iter().position(|&t| t == k) {
                        grid[i][r] = if dmask & (1 << pos) == 0 { Symbol::Down } else { Symbol::Up };
                    }
                }
                if let Some(m) = solve_pattern(&grid, &columns, a)? {
                    found.insert(m.into_rows());
                }
            }
        }
    }
    found.into_iter().map(Mechanism::over_results).collect()
}

/// Solves the row sums for a fixed pattern; `None` unless the solution is
/// unique and feasible.
fn solve_pattern(grid: &[Vec<Symbol>], columns: &[usize], a: &PrivacyLevel) -> Result<Option<Mechanism>> {
    let n = grid.len();
    let alpha = a.alpha();
    // (column, first row, geometric factors for rows of the run)
    let mut runs: Vec<(usize, usize, Vec<Rational>)> = Vec::new();
    for &r in columns {
        let mut start = 0;
        let mut factors = vec![Rational::one()];
        for (i, row) in grid.iter().enumerate().take(n) {
            match row[r] {
                Symbol::Slack => {
                    runs.push((r, start, std::mem::replace(&mut factors, vec![Rational::one()])));
                    start = i + 1;
                }
                Symbol::Down => {
                    let next = factors.last().expect("nonempty") * alpha;
                    factors.push(next);
                }
                Symbol::Up => {
                    let next = factors.last().expect("nonempty") / alpha;
                    factors.push(next);
                }
                Symbol::Zero => unreachable!("zero cells only in zero columns"),
            }
        }
        runs.push((r, start, factors));
    }
    let k = runs.len();
    // augmented system: rows are results, columns are run scales
    let mut system: Vec<Vec<Rational>> = (0..=n)
        .map(|i| {
            let mut row: Vec<Rational> = runs
                .iter()
                .map(
                    |(_, start, f)| {
                        if i >= *start && i < start + f.len() {
                            f[i - start].clone()
                        } else {
                            Rational::zero()
                        }
                    },
                )
                .collect();
            row.push(Rational::one());
            row
        })
        .collect();
    let Some(scales) = solve_unique(&mut system, k) else {
        return Ok(None);
    };
    if scales.iter().any(|s| !s.is_positive()) {
        return Ok(None);
    }
    let mut rows = vec![vec![Rational::zero(); n + 1]; n + 1];
    for ((r, start, f), scale) in runs.iter().zip(&scales) {
        for (j, factor) in f.iter().enumerate() {
            rows[start + j][*r] = factor * scale;
        }
    }
    let m = Mechanism::over_results(rows)?;
    Ok(check_differential_privacy(&m, a).is_private().then_some(m))
}

/// Unique solution of an augmented `rows × (k + 1)` system, if any.
fn solve_unique(system: &mut [Vec<Rational>], k: usize) -> Option<Vec<Rational>> {
    let mut pivot_row = 0;
    for col in 0..k {
        let p = (pivot_row..system.len()).find(|&i| !system[i][col].is_zero())?;
        system.swap(pivot_row, p);
        let pivot = system[pivot_row][col].clone();
        for v in system[pivot_row].iter_mut() {
            *v /= &pivot;
        }
        let prow = system[pivot_row].clone();
        for (i, row) in system.iter_mut().enumerate() {
            if i != pivot_row && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, y) in row.iter_mut().zip(&prow) {
                    *x -= &f * y;
                }
            }
        }
        pivot_row += 1;
    }
    // leftover rows must read 0 = 0
    if system[pivot_row..].iter().any(|row| !row[k].is_zero()) {
        return None;
    }
    Some((0..k).map(|i| system[i][k].clone()).collect())
}

/// Smallest user objective over [`enumerate_vertices`].
pub fn vertex_enumeration_minimum(u: &UserModel, a: &PrivacyLevel, n: usize) -> Result<Rational> {
    enumerate_vertices(a, n)?
        .iter()
        .map(|m| expected_loss(m, u))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min()
        .ok_or_else(|| Error::Lp("region has no vertices".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{endpoint_user, half, reference_constraint_matrix, reference_user, reference_vertex};
    use crate::ratio as q;
    use Symbol::{Down as D, Slack as S, Up as U, Zero as Z};

    fn g(n: usize, a: &PrivacyLevel) -> Mechanism {
        truncated_geometric(&GeometricSpec::new(a.clone(), n).unwrap())
    }

    #[test]
    fn reference_vertex_matrix_matches() {
        let c = constraint_matrix(&reference_vertex(), &half()).unwrap();
        assert_eq!(c, reference_constraint_matrix());
        assert_eq!(c.get(0, 0), D);
        assert_eq!(c.get(1, 2), S);
        assert_eq!(c.get(0, 2), U);
        assert_eq!(c.zero_columns(), vec![1]);
    }

    #[test]
    fn reference_matrix_passes_with_one_slack() {
        let c = reference_constraint_matrix();
        let acc = SlackAccounting::from_matrix(&c);
        assert_eq!((acc.s, acc.z), (1, 1));
        let report = validate_vertex_structure(&c, &acc);
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn geometric_has_no_slack() {
        for a in [q(1, 4), q(1, 2), q(3, 4)] {
            let a = PrivacyLevel::new(a).unwrap();
            for n in 1..=8 {
                let c = constraint_matrix(&g(n, &a), &a).unwrap();
                assert!(c.grid().iter().flatten().all(|s| matches!(s, D | U)));
                let acc = SlackAccounting::from_matrix(&c);
                assert_eq!((acc.s, acc.z), (0, 0));
                assert!(validate_vertex_structure(&c, &acc).all_pass());
                let y = derive_remap_from_constraint_matrix(&c, &acc, n).unwrap();
                assert_eq!(y, Remap::identity((0..=n as i64).collect()));
            }
        }
    }

    #[test]
    fn identical_rows_are_all_slack() {
        let row = vec![q(1, 2), q(1, 4), q(1, 4)];
        let m = Mechanism::over_results(vec![row.clone(), row.clone(), row]).unwrap();
        let c = constraint_matrix(&m, &half()).unwrap();
        assert!(c.grid().iter().flatten().all(|&s| s == S));
    }

    #[test]
    fn infeasible_rejected() {
        let m = Mechanism::<Rational>::identity(2);
        assert!(matches!(constraint_matrix(&m, &half()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn all_down_row_fails_with_witness() {
        let c = ConstraintMatrix::from_grid(vec![vec![D, D, D], vec![D, D, U]]).unwrap();
        let report = validate_vertex_structure(&c, &SlackAccounting::from_matrix(&c));
        let outcome = report.outcome(Property::NoMonotoneRow);
        assert_eq!(outcome.witness, Some(Witness { row: Some(0), column: None }));
    }

    #[test]
    fn shape_and_growth_violations() {
        let c = ConstraintMatrix::from_grid(vec![vec![U, D, U], vec![D, U, U]]).unwrap();
        let report = validate_vertex_structure(&c, &SlackAccounting::from_matrix(&c));
        assert_eq!(report.outcome(Property::RowShape).witness.unwrap().row, Some(0));
        let c = ConstraintMatrix::from_grid(vec![vec![D, D, U], vec![D, U, U]]).unwrap();
        let report = validate_vertex_structure(&c, &SlackAccounting::from_matrix(&c));
        assert_eq!(report.outcome(Property::DownGrowth).witness.unwrap().row, Some(1));
        assert!(!report.outcome(Property::ColumnPattern).passed());
    }

    #[test]
    fn row_shapes() {
        assert!(has_row_shape(&[D, D, S, U]));
        assert!(has_row_shape(&[S]));
        assert!(has_row_shape(&[D, U]));
        assert!(!has_row_shape(&[S, S]));
        assert!(!has_row_shape(&[U, D]));
        assert!(!has_row_shape(&[S, D]));
        assert!(!has_row_shape(&[D, S, U, S]));
    }

    #[test]
    fn slack_accounting_prefixes() {
        let acc = SlackAccounting::from_matrix(&reference_constraint_matrix());
        assert_eq!(acc.columns, vec![0, 2, 3, 4, 5]);
        assert_eq!(acc.per_column, vec![0, 1, 0, 0, 0]);
        assert_eq!(acc.prefix, vec![0, 1, 1, 1, 1]);
    }

    #[test]
    fn reference_matrix_derives_example_map() {
        let c = reference_constraint_matrix();
        let acc = SlackAccounting::from_matrix(&c);
        let y = derive_remap_from_constraint_matrix(&c, &acc, 5).unwrap();
        let image: Vec<i64> = (0..=5).map(|r| y.target_of(r).unwrap()).collect();
        assert_eq!(image, vec![0, 2, 2, 3, 4, 5]);
        assert_eq!(compose(&y, &g(5, &half())).unwrap(), reference_vertex());
    }

    #[test]
    fn render_round_trips() {
        let c = reference_constraint_matrix();
        let text = c.render();
        assert!(text.starts_with("v Z ^ ^ ^ ^\nv Z S ^ ^ ^\n"));
        assert!(text.ends_with(&format!("{LEGEND}\n")));
        assert_eq!(ConstraintMatrix::parse(&text).unwrap(), c);
    }

    #[test]
    fn mixed_zero_column_rejected() {
        assert!(ConstraintMatrix::from_grid(vec![vec![Z, D, U], vec![D, D, U]]).is_err());
    }

    #[test]
    fn factorization_on_worked_users() {
        let rec = verify_factorization(&reference_user(), &half(), 5).unwrap();
        assert!(rec.passed(), "{rec:?}");
        assert_eq!(rec.vertex, reference_vertex());
        assert_eq!(rec.remap_loss, expected_loss(&reference_vertex(), &reference_user()).unwrap());
        let rec = verify_factorization(&endpoint_user(), &half(), 5).unwrap();
        assert!(rec.passed());
        assert_eq!(rec.remap_loss, q(1, 12));
        assert_eq!(rec.lp_loss, q(1, 12));
    }

    #[test]
    fn uniqueness_verdicts() {
        let a = half();
        let geo = g(5, &a);
        let v = verify_uniqueness(&a, 5, &geo).unwrap();
        assert!(v.equivalent());
        assert_eq!(v.remap, Remap::identity((0..=5).collect()));
        let reversed = geo.permute_columns(&[5, 4, 3, 2, 1, 0]).unwrap().relabel((0..=5).collect()).unwrap();
        let v = verify_uniqueness(&a, 5, &reversed).unwrap();
        assert!(v.equivalent());
        assert_eq!(v.remap.target_of(0), Some(5));
        let v = verify_uniqueness(&a, 5, &reference_vertex()).unwrap();
        assert!(!v.equivalent());
        assert!(!v.is_permutation);
    }

    #[test]
    fn random_prior_properties() {
        let mut rng = trial_rng(3, 0);
        let mut zero_seen = false;
        for n in 1..=8 {
            for _ in 0..50 {
                let p = random_prior(&mut rng, n);
                assert_eq!(p.iter().sum::<Rational>(), q(1, 1));
                assert!(p.iter().all(|x| !x.is_negative() && (q(64, 1) * x).is_integer()));
                zero_seen |= p.iter().any(Zero::is_zero);
            }
        }
        assert!(zero_seen);
    }

    #[test]
    fn geometric_is_enumerated_vertex() {
        let a = half();
        for n in 1..=2 {
            let vertices = enumerate_vertices(&a, n).unwrap();
            assert!(vertices.contains(&g(n, &a)));
            for v in &vertices {
                assert!(check_row_stochastic(v.rows()).unwrap().is_valid());
                assert!(check_differential_privacy(v, &a).is_private());
            }
        }
    }

    #[test]
    fn n1_vertices_by_hand() {
        // Row sums plus one tight cell per column, or one zero column.
        let vertices = enumerate_vertices(&half(), 1).unwrap();
        let expected: BTreeSet<Vec<Vec<Rational>>> = [
            vec![vec![q(1, 1), q(0, 1)], vec![q(1, 1), q(0, 1)]],
            vec![vec![q(0, 1), q(1, 1)], vec![q(0, 1), q(1, 1)]],
            vec![vec![q(2, 3), q(1, 3)], vec![q(1, 3), q(2, 3)]],
            vec![vec![q(1, 3), q(2, 3)], vec![q(2, 3), q(1, 3)]],
        ]
        .into_iter()
        .collect();
        let got: BTreeSet<_> = vertices.into_iter().map(Mechanism::into_rows).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn some_vertex_is_not_derivable() {
        let a = half();
        let bad: Vec<Mechanism> = enumerate_vertices(&a, 2)
            .unwrap()
            .into_iter()
            .filter(|v| {
                let c = constraint_matrix(v, &a).unwrap();
                !validate_vertex_structure(&c, &SlackAccounting::from_matrix(&c)).all_pass()
            })
            .collect();
        assert!(!bad.is_empty());
    }

    #[test]
    fn enumeration_capacity_guard() {
        assert!(matches!(enumerate_vertices(&half(), 4), Err(Error::Capacity { .. })));
    }
}

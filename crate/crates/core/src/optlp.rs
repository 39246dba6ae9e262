//! The user-specific linear program: minimize a user's expected loss over
//! every oblivious `alpha`-private mechanism with range `0..=n`.
//!
//! Variable `x[i][r]` sits in column `i * (n + 1) + r`. For each adjacent
//! pair of results `(i, i + 1)` and each response `r` there are two privacy
//! rows, then one row-sum equality per result.
//!
//! The feasible region depends only on `(alpha, n)`, never on the user, and
//! the truncated geometric mechanism is a nondegenerate vertex of it. The
//! solver therefore factors the region once at that vertex and reuses the
//! factorization for every user ([`VertexSolver`]).
//!
//! Ties between optimal vertices are broken by a second objective: the
//! uniform prior with absolute loss. The returned vertex is then optimal for
//! a full-support user with strictly increasing loss, which is the setting
//! in which the structural properties of [`analysis`](crate::analysis) apply.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::loss::{LossFunction, UserModel};
use crate::lp::{LinearProgram, Sense, StandardForm, Tableau};
use crate::mechanism::{Mechanism, PrivacyLevel};
use crate::mechanisms::{truncated_geometric, GeometricSpec};
use crate::precision;
use crate::Rational;

/// Extra digits used by the optimality post-pass over the user's precision.
const RECHECK_EXTRA_DIGITS: u32 = 16;
/// Reduced costs above `-10^-40` count as non-improving in the post-pass.
const RECHECK_MARGIN_DIGITS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowKind {
    /// `x[i][r] - alpha x[i+1][r] >= 0`; tight means the column falls by
    /// exactly `alpha` from row `i` to row `i + 1`.
    Down {
        i: usize,
        r: usize,
    },
    /// `alpha x[i][r] - x[i+1][r] <= 0`; tight means it rises by `1 / alpha`.
    Up {
        i: usize,
        r: usize,
    },
    RowSum {
        i: usize,
    },
}

/// A constraint of the user LP that holds with equality at a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tight {
    Row(RowKind),
    NonNegative { i: usize, r: usize },
}

#[derive(Clone, Debug)]
pub struct UserLp {
    n: usize,
    alpha: PrivacyLevel,
    user: UserModel,
    program: LinearProgram<Rational>,
    rows: Vec<RowKind>,
}

impl UserLp {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> &PrivacyLevel {
        &self.alpha
    }

    pub fn user(&self) -> &UserModel {
        &self.user
    }

    pub fn program(&self) -> &LinearProgram<Rational> {
        &self.program
    }

    pub fn row_kinds(&self) -> &[RowKind] {
        &self.rows
    }

    pub fn num_variables(&self) -> usize {
        self.program.num_vars()
    }

    pub fn num_privacy_rows(&self) -> usize {
        self.rows.iter().filter(|k| !matches!(k, RowKind::RowSum { .. })).count()
    }

    pub fn num_equalities(&self) -> usize {
        self.rows.len() - self.num_privacy_rows()
    }

    pub fn var(&self, i: usize, r: usize) -> usize {
        i * (self.n + 1) + r
    }

    /// User objective `p_i l(i, r)`, the first objective tier.
    pub fn objective(&self) -> &[Rational] {
        &self.program.objectives()[0]
    }

    /// Flattens a mechanism over `0..=n` into LP variable order.
    pub fn flatten(&self, m: &Mechanism) -> Result<Vec<Rational>> {
        if m.n() != self.n || !m.has_range_n() {
            return Err(Error::Dimension(format!(
                "expected a mechanism over 0..={} with range 0..={}",
                self.n, self.n
            )));
        }
        Ok(m.rows().iter().flatten().cloned().collect())
    }

    pub fn unflatten(&self, x: &[Rational]) -> Mechanism {
        let rows = x.chunks(self.n + 1).map(<[Rational]>::to_vec).collect();
        Mechanism::over_results(rows).expect("square by construction")
    }

    /// Every constraint tight at `x`, compared exactly.
    pub fn tight_set(&self, x: &[Rational]) -> Vec<Tight> {
        let mut tight: Vec<Tight> = (0..self.rows.len())
            .filter(|&k| self.program.row_activity(k, x) == self.program.constraints()[k].rhs)
            .map(|k| Tight::Row(self.rows[k]))
            .collect();
        for i in 0..=self.n {
            for r in 0..=self.n {
                if x[self.var(i, r)].is_zero() {
                    tight.push(Tight::NonNegative { i, r });
                }
            }
        }
        tight
    }

    /// Rank of the tight constraints' normals, by exact elimination.
    pub fn tight_rank(&self, tight: &[Tight]) -> usize {
        let width = self.num_variables();
        let normals: Vec<Vec<Rational>> = tight
            .iter()
            .map(|t| {
                let mut v = vec![Rational::zero(); width];
                match t {
                    Tight::Row(kind) => {
                        let k = self.rows.iter().position(|x| x == kind).expect("row of this LP");
                        for (j, c) in &self.program.constraints()[k].coeffs {
                            v[*j] += c;
                        }
                    }
                    Tight::NonNegative { i, r } => v[self.var(*i, *r)] = Rational::one(),
                }
                v
            })
            .collect();
        rank(normals)
    }
}

/// Rank of a set of rational row vectors.
pub fn rank(mut rows: Vec<Vec<Rational>>) -> usize {
    let width = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for col in 0..width {
        let Some(p) = (r..rows.len()).find(|&k| !rows[k][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let pivot = rows[r][col].clone();
        let prow: Vec<Rational> = rows[r].iter().map(|v| v / &pivot).collect();
        for (k, row) in rows.iter_mut().enumerate() {
            if k == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (a, b) in row.iter_mut().zip(&prow).skip(col) {
                if !b.is_zero() {
                    *a -= &f * b;
                }
            }
        }
        rows[r] = prow;
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}

fn objective_costs(u: &UserModel, n: usize) -> Result<Vec<Rational>> {
    let table = u.loss().table::<Rational>(n, &(0..=n as i64).collect::<Vec<_>>())?;
    let mut costs = Vec::with_capacity((n + 1) * (n + 1));
    for (p, row) in u.prior().iter().zip(&table) {
        costs.extend(row.iter().map(|l| p * l));
    }
    Ok(costs)
}

fn tiebreak_costs(n: usize) -> Result<Vec<Rational>> {
    objective_costs(&UserModel::uniform(n, LossFunction::absolute()), n)
}

/// The region of every user LP at `(alpha, n)`, without objectives.
fn region(a: &PrivacyLevel, n: usize) -> Result<(LinearProgram<Rational>, Vec<RowKind>)> {
    if n < 1 {
        return Err(Error::Dimension("the user LP needs n >= 1".into()));
    }
    let alpha = a.alpha().clone();
    let width = n + 1;
    let var = |i: usize, r: usize| i * width + r;
    let mut program = LinearProgram::new(width * width);
    let mut rows = Vec::new();
    let one = Rational::one();
    for i in 0..n {
        for r in 0..=n {
            program.add_constraint(
                vec![(var(i, r), one.clone()), (var(i + 1, r), -alpha.clone())],
                Sense::Ge,
                Rational::zero(),
                format!("down({i},{r})"),
            )?;
            rows.push(RowKind::Down { i, r });
            program.add_constraint(
                vec![(var(i, r), alpha.clone()), (var(i + 1, r), -one.clone())],
                Sense::Le,
                Rational::zero(),
                format!("up({i},{r})"),
            )?;
            rows.push(RowKind::Up { i, r });
        }
    }
    for i in 0..=n {
        program.add_constraint(
            (0..=n).map(|r| (var(i, r), one.clone())).collect(),
            Sense::Eq,
            one.clone(),
            format!("sum({i})"),
        )?;
        rows.push(RowKind::RowSum { i });
    }
    Ok((program, rows))
}

/// Builds the user LP. The first objective tier is the user's expected
/// loss; the second is the tie-breaking uniform absolute-loss user.
pub fn build_lp(u: &UserModel, a: &PrivacyLevel, n: usize) -> Result<UserLp> {
    if u.n() != n {
        return Err(Error::Dimension(format!("user prior covers 0..={}, LP covers 0..={n}", u.n())));
    }
    let (mut program, rows) = region(a, n)?;
    program.push_objective(objective_costs(u, n)?)?;
    program.push_objective(tiebreak_costs(n)?)?;
    Ok(UserLp { n, alpha: a.clone(), user: u.clone(), program, rows })
}

/// Result of re-pricing the final basis with the loss evaluated at higher
/// precision.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityCheck {
    pub digits: u32,
    /// Smallest reduced cost of a nonbasic column at the higher precision.
    pub min_reduced_cost: Rational,
    /// Nonbasic columns whose reduced cost lies within the margin of zero.
    pub near_zero: usize,
    /// No reduced cost falls below `-10^-40`.
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct VertexSolution {
    pub mechanism: Mechanism,
    /// User objective (expected loss) at the vertex.
    pub objective: Rational,
    /// Tie-breaking objective at the vertex.
    pub secondary: Rational,
    pub tight: Vec<Tight>,
    /// Nonbasic columns with zero primary reduced cost: each is a direction
    /// along which the optimal face may extend.
    pub alternative_optima: usize,
    pub pivots: usize,
    pub check: Option<OptimalityCheck>,
}

impl VertexSolution {
    /// Exact rank of the tight set. Costly for large `n`; the basis already
    /// guarantees `(n + 1)^2`.
    pub fn tight_rank(&self, lp: &UserLp) -> usize {
        lp.tight_rank(&self.tight)
    }
}

/// Factorization of the `(alpha, n)` region at the truncated geometric
/// vertex, shared by every user.
#[derive(Clone, Debug)]
struct WarmStart {
    form: StandardForm<Rational>,
    tableau: Tableau<Rational>,
}

impl WarmStart {
    fn new(lp: &UserLp) -> Result<Self> {
        let g = truncated_geometric(&GeometricSpec::new(lp.alpha.clone(), lp.n)?);
        let x = lp.flatten(&g)?;
        let form = StandardForm::new(&lp.program);
        // G is strictly positive and exactly one privacy row per cell is
        // tight, so the slack of each loose row completes the basis.
        let mut basis: Vec<usize> = (0..lp.num_variables()).collect();
        for (k, slack) in form.slack_col.iter().enumerate() {
            if let Some(col) = slack {
                if lp.program.row_activity(k, &x) != lp.program.constraints()[k].rhs {
                    basis.push(*col);
                }
            }
        }
        let tableau = Tableau::from_basis(&form, &basis)?;
        Ok(Self { form, tableau })
    }

    fn solve(&self, lp: &UserLp) -> Result<VertexSolution> {
        let mut tableau = self.tableau.clone();
        let tiers = self.form.expand_objectives(lp.program.objectives());
        tableau.set_objectives(&tiers);
        match tableau.optimize()? {
            crate::lp::Step::Optimal => {}
            crate::lp::Step::Unbounded => return Err(Error::Lp("user LP reported unbounded".into())),
        }
        let x = tableau.primal()[..lp.num_variables()].to_vec();
        if !lp.program.is_feasible(&x) {
            return Err(Error::Lp("simplex returned an infeasible point".into()));
        }
        let values = tableau.values();
        let alternative_optima = tableau.zero_reduced_nonbasic().len();
        VertexSolution {
            mechanism: lp.unflatten(&x),
            objective: values[0].clone(),
            secondary: values[1].clone(),
            tight: lp.tight_set(&x),
            alternative_optima,
            pivots: tableau.pivots(),
            check: None,
        }
        .with_check(lp, &tableau)
    }
}

impl VertexSolution {
    fn with_check(mut self, lp: &UserLp, tableau: &Tableau<Rational>) -> Result<Self> {
        self.check = recheck(lp, tableau)?;
        Ok(self)
    }
}

/// For inexact losses, re-prices the final basis with the loss at higher
/// precision and checks that no nonbasic column improves by more than the
/// margin. Exact losses need no recheck.
fn recheck(lp: &UserLp, tableau: &Tableau<Rational>) -> Result<Option<OptimalityCheck>> {
    let user = &lp.user;
    if user.loss().is_exact() {
        return Ok(None);
    }
    let digits = user.loss().digits() + RECHECK_EXTRA_DIGITS;
    let finer = user.with_loss(user.loss().at_digits(digits)?)?;
    let mut costs = objective_costs(&finer, lp.n)?;
    costs.resize(tableau.num_cols(), Rational::zero());
    let (reduced, _) = tableau.price(&costs);
    let basic: std::collections::HashSet<usize> = tableau.basis().iter().copied().collect();
    let margin = precision::ten_to_minus(RECHECK_MARGIN_DIGITS);
    let nonbasic: Vec<&Rational> =
        reduced.iter().enumerate().filter(|(j, _)| !basic.contains(j)).map(|(_, d)| d).collect();
    let min_reduced_cost = nonbasic.iter().map(|d| (*d).clone()).min().unwrap_or_else(Rational::zero);
    let near_zero = nonbasic.iter().filter(|d| d.abs() <= margin).count();
    Ok(Some(OptimalityCheck {
        digits,
        min_reduced_cost: min_reduced_cost.clone(),
        near_zero,
        certified: min_reduced_cost >= -margin,
    }))
}

/// Solves a user LP, warm-starting at the truncated geometric vertex.
pub fn solve_vertex(lp: &UserLp) -> Result<VertexSolution> {
    WarmStart::new(lp)?.solve(lp)
}

/// `build_lp` followed by `solve_vertex`, with the high-precision optimality
/// recheck for inexact losses.
pub fn optimal_mechanism_for_user(u: &UserModel, a: &PrivacyLevel, n: usize) -> Result<VertexSolution> {
    solve_vertex(&build_lp(u, a, n)?)
}

/// Caches the region factorization per `(alpha, n)` so that sweeps over many
/// users pay for it once. Safe to share across threads.
#[derive(Default)]
pub struct VertexSolver {
    cache: Mutex<HashMap<(Rational, usize), Arc<WarmStart>>>,
}

impl VertexSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&self, u: &UserModel, a: &PrivacyLevel, n: usize) -> Result<VertexSolution> {
        let lp = build_lp(u, a, n)?;
        let key = (a.alpha().clone(), n);
        let cached = self.cache.lock().expect("cache lock").get(&key).cloned();
        let warm = match cached {
            Some(w) => w,
            None => {
                let w = Arc::new(WarmStart::new(&lp)?);
                self.cache.lock().expect("cache lock").entry(key).or_insert(w).clone()
            }
        };
        warm.solve(&lp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{random_user, trial_rng, vertex_enumeration_minimum};
    use crate::fixtures::{endpoint_user, half, reference_user, reference_vertex};
    use crate::loss::expected_loss;
    use crate::ratio as q;

    fn level(a: i64, b: i64) -> PrivacyLevel {
        PrivacyLevel::from_ratio(a, b).unwrap()
    }

    #[test]
    fn lp_sizes() {
        for (n, vars, ineq, eq) in [(1, 4, 4, 2), (5, 36, 60, 6)] {
            let lp = build_lp(&UserModel::uniform(n, LossFunction::binary()), &half(), n).unwrap();
            assert_eq!((lp.num_variables(), lp.num_privacy_rows(), lp.num_equalities()), (vars, ineq, eq));
        }
    }

    #[test]
    fn power_loss_coefficient() {
        let lp = build_lp(&reference_user(), &half(), 5).unwrap();
        let (two_to_1_5, exact) = precision::pow(2, &q(3, 2), precision::DEFAULT_DIGITS);
        assert!(!exact);
        assert_eq!(lp.objective()[lp.var(0, 2)], q(1, 4) * two_to_1_5);
        assert!(lp.objective().iter().all(|c| !c.is_negative()));
    }

    #[test]
    fn mismatched_user_rejected() {
        assert!(build_lp(&UserModel::uniform(3, LossFunction::binary()), &half(), 4).is_err());
    }

    #[test]
    fn reference_vertex_instance_is_reproduced() {
        let sol = optimal_mechanism_for_user(&reference_user(), &half(), 5).unwrap();
        assert_eq!(sol.mechanism, reference_vertex());
        assert_eq!(sol.objective, expected_loss(&reference_vertex(), &reference_user()).unwrap());
        assert!(sol.check.as_ref().unwrap().certified);
    }

    #[test]
    fn uniform_binary_user_gets_geometric() {
        for (a, b) in [(1, 4), (1, 2), (3, 4)] {
            let a = level(a, b);
            for n in 1..=6 {
                let sol = optimal_mechanism_for_user(&UserModel::uniform(n, LossFunction::binary()), &a, n).unwrap();
                assert_eq!(sol.mechanism, truncated_geometric(&GeometricSpec::new(a.clone(), n).unwrap()));
            }
        }
    }

    #[test]
    fn small_instances() {
        let sol = optimal_mechanism_for_user(&endpoint_user(), &half(), 5).unwrap();
        assert_eq!(sol.objective, q(1, 12));
        let sol = optimal_mechanism_for_user(&UserModel::uniform(1, LossFunction::binary()), &half(), 1).unwrap();
        assert_eq!(sol.objective, q(1, 3));
        // A user certain of result 0 is served perfectly by the constant
        // mechanism that always answers 0.
        let point = UserModel::new(vec![q(1, 1), q(0, 1)], LossFunction::absolute()).unwrap();
        let sol = optimal_mechanism_for_user(&point, &half(), 1).unwrap();
        assert_eq!(sol.objective, q(0, 1));
        assert_eq!(sol.mechanism.rows(), &[vec![q(1, 1), q(0, 1)], vec![q(1, 1), q(0, 1)]]);
    }

    #[test]
    fn geometric_is_feasible() {
        for (a, b) in [(1, 10), (1, 4), (1, 2), (3, 4), (9, 10)] {
            let a = level(a, b);
            for n in 1..=12 {
                let lp = build_lp(&UserModel::uniform(n, LossFunction::binary()), &a, n).unwrap();
                let x = lp.flatten(&truncated_geometric(&GeometricSpec::new(a.clone(), n).unwrap())).unwrap();
                assert!(lp.program().is_feasible(&x));
            }
        }
    }

    #[test]
    fn vertices_have_full_rank_and_exact_feasibility() {
        let solver = VertexSolver::new();
        for t in 0..30 {
            let mut rng = trial_rng(21, t);
            let n = 1 + t % 5;
            let u = random_user(&mut rng, n, 64);
            let sol = solver.solve(&u, &half(), n).unwrap();
            let lp = build_lp(&u, &half(), n).unwrap();
            let x = lp.flatten(&sol.mechanism).unwrap();
            // exact re-substitution: no tolerance is involved for rationals
            assert!(lp.program().is_feasible(&x));
            assert!(sol.tight_rank(&lp) >= (n + 1) * (n + 1));
        }
    }

    #[test]
    fn agrees_with_vertex_enumeration() {
        let a = half();
        for t in 0..40 {
            let mut rng = trial_rng(8, t);
            let n = 1 + t % 3;
            let u = random_user(&mut rng, n, 64);
            let sol = optimal_mechanism_for_user(&u, &a, n).unwrap();
            assert_eq!(sol.objective, vertex_enumeration_minimum(&u, &a, n).unwrap(), "trial {t}");
        }
    }

    #[test]
    fn cached_and_fresh_solutions_agree() {
        let solver = VertexSolver::new();
        for t in 0..10 {
            let mut rng = trial_rng(4, t);
            let u = random_user(&mut rng, 4, 64);
            let a = level(3, 4);
            let cached = solver.solve(&u, &a, 4).unwrap();
            let fresh = optimal_mechanism_for_user(&u, &a, 4).unwrap();
            assert_eq!(cached.mechanism, fresh.mechanism);
        }
    }

    #[test]
    fn rank_of_small_sets() {
        assert_eq!(rank(vec![vec![q(1, 1), q(2, 1)], vec![q(2, 1), q(4, 1)]]), 1);
        assert_eq!(rank(vec![vec![q(0, 1), q(1, 1)], vec![q(1, 1), q(0, 1)], vec![q(1, 1), q(1, 1)]]), 2);
        assert_eq!(rank(Vec::new()), 0);
    }

    #[test]
    fn cold_start_matches_warm_start() {
        let lp = build_lp(&reference_user(), &half(), 5).unwrap();
        let cold = lp.program().solve().unwrap().optimal().unwrap();
        assert_eq!(cold.objective[0], solve_vertex(&lp).unwrap().objective);
    }
}

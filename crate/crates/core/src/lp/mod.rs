//! A small dense simplex solver over any [`Scalar`].
//!
//! Problems are stated as `minimize c·x` subject to linear rows with `<=`,
//! `>=` or `=` and `x >= 0`. Several objectives may be given; they are
//! minimized lexicographically, the first one dominating. Over
//! [`Rational`](crate::Rational) every pivot is exact, so optimal vertices,
//! tight sets and infeasibility certificates are exact as well.

mod tableau;

pub use tableau::{StandardForm, Step, Tableau};

use crate::error::{Error, Result};
use crate::scalar::{mul, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint<T> {
    /// Sparse coefficients `(variable, value)`.
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    num_vars: usize,
    constraints: Vec<Constraint<T>>,
    objectives: Vec<Vec<T>>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, constraints: Vec::new(), objectives: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }

    pub fn objectives(&self) -> &[Vec<T>] {
        &self.objectives
    }

    /// Adds a row and returns its index.
    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(usize, T)>,
        sense: Sense,
        rhs: T,
        label: impl Into<String>,
    ) -> Result<usize> {
        if let Some((v, _)) = coeffs.iter().find(|(v, _)| *v >= self.num_vars) {
            return Err(Error::Lp(format!("variable {v} out of range")));
        }
        self.constraints.push(Constraint { coeffs, sense, rhs, label: label.into() });
        Ok(self.constraints.len() - 1)
    }

    /// Appends an objective tier. Earlier tiers dominate later ones.
    pub fn push_objective(&mut self, costs: Vec<T>) -> Result<()> {
        if costs.len() != self.num_vars {
            return Err(Error::Lp(format!(
                "objective has {} coefficients for {} variables",
                costs.len(),
                self.num_vars
            )));
        }
        self.objectives.push(costs);
        Ok(())
    }

    pub fn clear_objectives(&mut self) {
        self.objectives.clear();
    }

    /// Two-phase simplex from scratch.
    pub fn solve(&self) -> Result<LpOutcome<T>> {
        let sf = StandardForm::new(self);
        match Tableau::phase_one(&sf)? {
            PhaseOne::Feasible(mut tableau) => {
                tableau.set_objectives(&sf.expand_objectives(&self.objectives));
                tableau.finish(&sf)
            }
            PhaseOne::Infeasible(certificate) => Ok(LpOutcome::Infeasible(certificate)),
        }
    }

    /// Value of row `k`'s left-hand side at `x`.
    pub fn row_activity(&self, k: usize, x: &[T]) -> T {
        let mut acc = T::zero();
        for (v, c) in &self.constraints[k].coeffs {
            acc += &mul(c, &x[*v]);
        }
        acc
    }

    /// Whether `x` satisfies every row and the sign constraints.
    pub fn is_feasible(&self, x: &[T]) -> bool {
        x.len() == self.num_vars
            && x.iter().all(|v| !v.is_neg())
            && (0..self.constraints.len()).all(|k| {
                let lhs = self.row_activity(k, x);
                let rhs = &self.constraints[k].rhs;
                match self.constraints[k].sense {
                    Sense::Le => lhs.approx_le(rhs),
                    Sense::Ge => rhs.approx_le(&lhs),
                    Sense::Eq => lhs.approx_eq(rhs),
                }
            })
    }
}

pub(crate) enum PhaseOne<T> {
    Feasible(Tableau<T>),
    Infeasible(FarkasCertificate<T>),
}

#[derive(Clone, Debug)]
pub enum LpOutcome<T> {
    Optimal(LpSolution<T>),
    Infeasible(FarkasCertificate<T>),
    Unbounded,
}

impl<T> LpOutcome<T> {
    pub fn optimal(self) -> Option<LpSolution<T>> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible(_))
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    /// Values of the structural variables.
    pub x: Vec<T>,
    /// Objective value per tier.
    pub objective: Vec<T>,
    /// Final tableau; its basis certifies the vertex and its reduced costs
    /// certify optimality.
    pub tableau: Tableau<T>,
    pub pivots: usize,
}

/// Farkas multipliers, one per original row, proving infeasibility:
/// `<=` rows get non-negative multipliers, `>=` rows non-positive ones, and
/// the combined row has non-negative coefficients but a negative
/// right-hand side, which no `x >= 0` can satisfy.
#[derive(Clone, Debug, PartialEq)]
pub struct FarkasCertificate<T> {
    pub multipliers: Vec<T>,
}

impl<T: Scalar> FarkasCertificate<T> {
    /// Re-checks the certificate against the program using only the
    /// program's own rows.
    pub fn verify(&self, lp: &LinearProgram<T>) -> bool {
        self.check(lp).is_ok()
    }

    /// Like [`verify`](Self::verify), naming the first failed condition.
    pub fn check(&self, lp: &LinearProgram<T>) -> std::result::Result<(), String> {
        if self.multipliers.len() != lp.constraints.len() {
            return Err("one multiplier per row required".into());
        }
        let mut combined = vec![T::zero(); lp.num_vars];
        let mut rhs = T::zero();
        for (k, (z, row)) in self.multipliers.iter().zip(&lp.constraints).enumerate() {
            match row.sense {
                Sense::Le if z.is_neg() => {
                    return Err(format!("row {k} ({}) is <= with negative multiplier", row.label))
                }
                Sense::Ge if z.is_pos() => {
                    return Err(format!("row {k} ({}) is >= with positive multiplier", row.label))
                }
                _ => {}
            }
            if z.is_zero() {
                continue;
            }
            for (v, c) in &row.coeffs {
                combined[*v] += &mul(z, c);
            }
            rhs += &mul(z, &row.rhs);
        }
        if let Some(v) = combined.iter().position(|c| c.is_neg()) {
            return Err(format!("combined coefficient of variable {v} is negative"));
        }
        if !rhs.is_neg() {
            return Err(format!("combined right-hand side {rhs:?} is not negative"));
        }
        Ok(())
    }

    /// Rows with a nonzero multiplier.
    pub fn support(&self) -> Vec<usize> {
        self.multipliers.iter().enumerate().filter(|(_, z)| !z.is_zero()).map(|(k, _)| k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ratio as q, Rational};

    fn r(v: i64) -> Rational {
        q(v, 1)
    }

    #[test]
    fn textbook_max_problem() {
        // max 3x + 2y st x + y <= 4, x + 3y <= 6, x <= 3  -> (3, 1), value 11
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(1))], Sense::Le, r(4), "a").unwrap();
        lp.add_constraint(vec![(0, r(1)), (1, r(3))], Sense::Le, r(6), "b").unwrap();
        lp.add_constraint(vec![(0, r(1))], Sense::Le, r(3), "c").unwrap();
        lp.push_objective(vec![r(-3), r(-2)]).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(sol.x, vec![r(3), r(1)]);
        assert_eq!(sol.objective[0], r(-11));
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y st x + y = 3, x - y >= -1, y >= 1/2  -> x = 5/2, y = 1/2
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(1))], Sense::Eq, r(3), "sum").unwrap();
        lp.add_constraint(vec![(0, r(1)), (1, r(-1))], Sense::Ge, r(-1), "diff").unwrap();
        lp.add_constraint(vec![(1, r(1))], Sense::Ge, q(1, 2), "floor").unwrap();
        lp.push_objective(vec![r(1), r(2)]).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(sol.x, vec![q(5, 2), q(1, 2)]);
        assert!(lp.is_feasible(&sol.x));
    }

    #[test]
    fn lexicographic_tie_break() {
        // min 0 over x + y = 1; second tier prefers y
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(1))], Sense::Eq, r(1), "sum").unwrap();
        lp.push_objective(vec![r(0), r(0)]).unwrap();
        lp.push_objective(vec![r(1), r(0)]).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(sol.x, vec![r(0), r(1)]);
        // reversed preference
        let mut lp2 = lp.clone();
        lp2.clear_objectives();
        lp2.push_objective(vec![r(0), r(0)]).unwrap();
        lp2.push_objective(vec![r(0), r(1)]).unwrap();
        assert_eq!(lp2.solve().unwrap().optimal().unwrap().x, vec![r(1), r(0)]);
    }

    #[test]
    fn infeasible_with_certificate() {
        // x + y <= 1 and x + y >= 2
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(1))], Sense::Le, r(1), "cap").unwrap();
        lp.add_constraint(vec![(0, r(1)), (1, r(1))], Sense::Ge, r(2), "floor").unwrap();
        lp.push_objective(vec![r(0), r(0)]).unwrap();
        match lp.solve().unwrap() {
            LpOutcome::Infeasible(cert) => {
                assert!(cert.verify(&lp));
                assert_eq!(cert.support(), vec![0, 1]);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_equalities_with_negative_rhs() {
        // x - y = -1, y - x = -1
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(-1))], Sense::Eq, r(-1), "a").unwrap();
        lp.add_constraint(vec![(0, r(-1)), (1, r(1))], Sense::Eq, r(-1), "b").unwrap();
        let cert = match lp.solve().unwrap() {
            LpOutcome::Infeasible(c) => c,
            other => panic!("{other:?}"),
        };
        assert!(cert.verify(&lp));
    }

    #[test]
    fn tampered_certificate_fails() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(vec![(0, r(1))], Sense::Le, r(1), "cap").unwrap();
        lp.add_constraint(vec![(0, r(1))], Sense::Ge, r(2), "floor").unwrap();
        let good = FarkasCertificate { multipliers: vec![r(1), r(-1)] };
        assert!(good.verify(&lp));
        let bad = FarkasCertificate { multipliers: vec![r(-1), r(1)] };
        assert!(!bad.verify(&lp));
        let weak = FarkasCertificate { multipliers: vec![r(1), r(0)] };
        assert!(!weak.verify(&lp));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(-1))], Sense::Le, r(1), "a").unwrap();
        lp.push_objective(vec![r(-1), r(0)]).unwrap();
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2);
        lp.add_constraint(vec![(0, r(1)), (1, r(1))], Sense::Eq, r(1), "a").unwrap();
        lp.add_constraint(vec![(0, r(2)), (1, r(2))], Sense::Eq, r(2), "a twice").unwrap();
        lp.push_objective(vec![r(1), r(3)]).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(sol.x, vec![r(1), r(0)]);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the textbook largest-coefficient
        // rule without an anti-cycling safeguard.
        let mut lp = LinearProgram::new(4);
        lp.add_constraint(vec![(0, q(1, 4)), (1, r(-60)), (2, q(-1, 25)), (3, r(9))], Sense::Le, r(0), "1").unwrap();
        lp.add_constraint(vec![(0, q(1, 2)), (1, r(-90)), (2, q(-1, 50)), (3, r(3))], Sense::Le, r(0), "2").unwrap();
        lp.add_constraint(vec![(2, r(1))], Sense::Le, r(1), "3").unwrap();
        lp.push_objective(vec![q(-3, 4), r(150), q(-1, 50), r(6)]).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(sol.objective[0], q(-1, 20));
    }

    #[test]
    fn float_instantiation() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Sense::Le, 4.0, "a").unwrap();
        lp.add_constraint(vec![(0, 1.0), (1, 3.0)], Sense::Le, 6.0, "b").unwrap();
        lp.add_constraint(vec![(0, 1.0)], Sense::Le, 3.0, "c").unwrap();
        lp.push_objective(vec![-3.0, -2.0]).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        assert!((sol.objective[0] + 11.0).abs() < 1e-12);
    }
}

use std::cmp::Ordering;

use super::{FarkasCertificate, LinearProgram, LpOutcome, LpSolution, PhaseOne, Sense};
use crate::error::{Error, Result};
use crate::scalar::{div, mul, Scalar};

const MAX_PIVOTS: usize = 1_000_000;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 25;

/// `A x = b, x >= 0, b >= 0` with one slack column per inequality row.
#[derive(Clone, Debug)]
pub struct StandardForm<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    /// Structural variables occupy columns `0..num_vars`.
    pub num_vars: usize,
    /// Row was multiplied by -1 to make its right-hand side non-negative.
    pub flipped: Vec<bool>,
    /// Slack column of each row, if it is an inequality.
    pub slack_col: Vec<Option<usize>>,
}

impl<T: Scalar> StandardForm<T> {
    pub fn new(lp: &LinearProgram<T>) -> Self {
        let m = lp.constraints.len();
        let slacks = lp.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
        let ncols = lp.num_vars + slacks;
        let mut a = vec![vec![T::zero(); ncols]; m];
        let mut b = Vec::with_capacity(m);
        let mut flipped = Vec::with_capacity(m);
        let mut slack_col = Vec::with_capacity(m);
        let mut next_slack = lp.num_vars;
        for (k, row) in lp.constraints.iter().enumerate() {
            for (v, c) in &row.coeffs {
                a[k][*v] += c;
            }
            match row.sense {
                Sense::Le | Sense::Ge => {
                    a[k][next_slack] = if row.sense == Sense::Le { T::one() } else { -T::one() };
                    slack_col.push(Some(next_slack));
                    next_slack += 1;
                }
                Sense::Eq => slack_col.push(None),
            }
            let flip = row.rhs.is_neg();
            if flip {
                for v in a[k].iter_mut() {
                    *v = -v.clone();
                }
                b.push(-row.rhs.clone());
            } else {
                b.push(row.rhs.clone());
            }
            flipped.push(flip);
        }
        Self { a, b, num_vars: lp.num_vars, flipped, slack_col }
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn num_cols(&self) -> usize {
        self.a.first().map_or(self.num_vars, Vec::len)
    }

    /// Objective tiers padded with zero cost on the slack columns.
    pub fn expand_objectives(&self, tiers: &[Vec<T>]) -> Vec<Vec<T>> {
        let ncols = self.num_cols();
        tiers
            .iter()
            .map(|costs| {
                let mut full = costs.clone();
                full.resize(ncols, T::zero());
                full
            })
            .collect()
    }
}

/// Dense simplex tableau `B^-1 A | B^-1 b` with reduced-cost rows.
#[derive(Clone, Debug)]
pub struct Tableau<T> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    ncols: usize,
    costs: Vec<Vec<T>>,
    reduced: Vec<Vec<T>>,
    value: Vec<T>,
    pivots: usize,
}

impl<T: Scalar> Tableau<T> {
    /// Phase one with one artificial column per row. On infeasibility the
    /// artificial reduced costs yield a Farkas certificate.
    pub(crate) fn phase_one(sf: &StandardForm<T>) -> Result<PhaseOne<T>> {
        let m = sf.num_rows();
        let n0 = sf.num_cols();
        let ncols = n0 + m;
        let rows: Vec<Vec<T>> =
            sf.a.iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut full = row.clone();
                    full.resize(ncols, T::zero());
                    full[n0 + i] = T::one();
                    full
                })
                .collect();
        let mut costs = vec![T::zero(); ncols];
        for c in costs.iter_mut().skip(n0) {
            *c = T::one();
        }
        let mut t = Tableau {
            rows,
            rhs: sf.b.clone(),
            basis: (n0..ncols).collect(),
            ncols,
            costs: Vec::new(),
            reduced: Vec::new(),
            value: Vec::new(),
            pivots: 0,
        };
        t.set_objectives(&[costs]);
        if !matches!(t.optimize()?, Step::Optimal) {
            return Err(Error::Lp("phase one cannot be unbounded".into()));
        }

        if t.value[0].is_pos() {
            // y_i = c_art - d_art = 1 - d_art; z = -y proves A x = b infeasible.
            let multipliers = (0..m)
                .map(|i| {
                    let y = T::one() - t.reduced[0][n0 + i].clone();
                    if sf.flipped[i] {
                        y
                    } else {
                        -y
                    }
                })
                .collect();
            return Ok(PhaseOne::Infeasible(FarkasCertificate { multipliers }));
        }

        // Drive remaining artificials out; rows with no structural entry are
        // redundant and dropped.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= n0 {
                match (0..n0).find(|&j| !t.rows[i][j].is_negligible()) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.rhs.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for row in t.rows.iter_mut() {
            row.truncate(n0);
        }
        t.ncols = n0;
        t.costs.clear();
        t.reduced.clear();
        t.value.clear();
        Ok(PhaseOne::Feasible(t))
    }

    /// Tableau for a given basis (one column per row), by Gauss-Jordan
    /// elimination. Fails if the basis is singular or infeasible.
    pub fn from_basis(sf: &StandardForm<T>, basis: &[usize]) -> Result<Self> {
        let m = sf.num_rows();
        if basis.len() != m {
            return Err(Error::Lp(format!("basis has {} columns for {m} rows", basis.len())));
        }
        let mut t = Tableau {
            rows: sf.a.clone(),
            rhs: sf.b.clone(),
            basis: vec![usize::MAX; m],
            ncols: sf.num_cols(),
            costs: Vec::new(),
            reduced: Vec::new(),
            value: Vec::new(),
            pivots: 0,
        };
        let mut assigned = vec![false; m];
        for &col in basis {
            if col >= t.ncols {
                return Err(Error::Lp(format!("basis column {col} out of range")));
            }
            let row = (0..m)
                .find(|&i| !assigned[i] && !t.rows[i][col].is_negligible())
                .ok_or_else(|| Error::Lp("basis is singular".into()))?;
            assigned[row] = true;
            t.pivot(row, col);
        }
        if let Some(i) = t.rhs.iter().position(|v| v.is_neg()) {
            return Err(Error::Lp(format!("basis is infeasible in row {i}")));
        }
        t.pivots = 0;
        Ok(t)
    }

    /// Installs objective tiers (full-width cost vectors) and recomputes
    /// reduced costs and values for the current basis.
    pub fn set_objectives(&mut self, tiers: &[Vec<T>]) {
        self.costs = tiers.to_vec();
        self.reduced.clear();
        self.value.clear();
        for tier in tiers {
            let (reduced, value) = self.price(tier);
            self.reduced.push(reduced);
            self.value.push(value);
        }
    }

    /// Reduced costs `c_j - c_B B^-1 A_j` and value `c_B B^-1 b` of an
    /// arbitrary cost vector at the current basis.
    pub fn price(&self, costs: &[T]) -> (Vec<T>, T) {
        let mut reduced = costs.to_vec();
        reduced.resize(self.ncols, T::zero());
        let mut value = T::zero();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = &costs[self.basis[i]];
            if cb.is_zero() {
                continue;
            }
            value += &mul(cb, &self.rhs[i]);
            for (d, a) in reduced.iter_mut().zip(row) {
                if !a.is_zero() {
                    *d -= &mul(cb, a);
                }
            }
        }
        (reduced, value)
    }

    pub(crate) fn finish(mut self, sf: &StandardForm<T>) -> Result<LpOutcome<T>> {
        match self.optimize()? {
            Step::Optimal => {
                let x = self.primal()[..sf.num_vars].to_vec();
                let objective = self.value.clone();
                let pivots = self.pivots;
                Ok(LpOutcome::Optimal(LpSolution { x, objective, tableau: self, pivots }))
            }
            Step::Unbounded => Ok(LpOutcome::Unbounded),
        }
    }

    /// Runs the simplex method from the current (feasible) basis.
    pub fn optimize(&mut self) -> Result<Step> {
        let mut streak = 0usize;
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(Error::Lp("pivot limit exceeded".into()));
            }
            let entering = if streak >= DEGENERATE_STREAK { self.bland_entering() } else { self.steepest_entering() };
            let Some(e) = entering else {
                return Ok(Step::Optimal);
            };
            let Some(r) = self.ratio_test(e) else {
                return Ok(Step::Unbounded);
            };
            if self.rhs[r].is_negligible() {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, e);
        }
    }

    fn lex_cmp_zero(&self, j: usize) -> Ordering {
        for tier in &self.reduced {
            let d = &tier[j];
            if d.is_neg() {
                return Ordering::Less;
            }
            if d.is_pos() {
                return Ordering::Greater;
            }
        }
        Ordering::Equal
    }

    fn lex_cmp_cols(&self, a: usize, b: usize) -> Ordering {
        for tier in &self.reduced {
            let (da, db) = (&tier[a], &tier[b]);
            if da.approx_eq(db) {
                continue;
            }
            return da.partial_cmp(db).unwrap_or(Ordering::Equal);
        }
        Ordering::Equal
    }

    fn improving(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.ncols).filter(move |&j| self.lex_cmp_zero(j) == Ordering::Less)
    }

    fn steepest_entering(&self) -> Option<usize> {
        self.improving().reduce(|best, j| if self.lex_cmp_cols(j, best) == Ordering::Less { j } else { best })
    }

    fn bland_entering(&self) -> Option<usize> {
        self.improving().next()
    }

    /// Minimum ratio row; ties go to the smallest basic column index.
    fn ratio_test(&self, e: usize) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = &row[e];
            if !a.is_pos() {
                continue;
            }
            let ratio = div(&self.rhs[i], a);
            let better = match &best {
                None => true,
                Some((k, b)) => {
                    if ratio.approx_eq(b) {
                        self.basis[i] < self.basis[*k]
                    } else {
                        ratio < *b
                    }
                }
            };
            if better {
                best = Some((i, ratio));
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let mut prow = std::mem::take(&mut self.rows[r]);
        let p = prow[e].clone();
        let support: Vec<usize> = (0..self.ncols).filter(|&j| !prow[j].is_zero()).collect();
        for &j in &support {
            prow[j] /= &p;
        }
        prow[e] = T::one();
        self.rhs[r] /= &p;
        let prhs = self.rhs[r].clone();

        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e].clone();
            if f.is_zero() {
                continue;
            }
            for &j in &support {
                row[j] -= &mul(&f, &prow[j]);
            }
            row[e] = T::zero();
            self.rhs[i] -= &mul(&f, &prhs);
            if !T::EXACT && self.rhs[i].is_negligible() {
                self.rhs[i] = T::zero();
            }
        }
        for (reduced, value) in self.reduced.iter_mut().zip(self.value.iter_mut()) {
            let f = reduced[e].clone();
            if f.is_zero() {
                continue;
            }
            for &j in &support {
                reduced[j] -= &mul(&f, &prow[j]);
            }
            reduced[e] = T::zero();
            *value += &mul(&f, &prhs);
        }
        self.rows[r] = prow;
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Full column vector (structural and slack) of the current vertex.
    pub fn primal(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.ncols];
        for (i, &col) in self.basis.iter().enumerate() {
            x[col] = self.rhs[i].clone();
        }
        x
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn num_cols(&self) -> usize {
        self.ncols
    }

    pub fn reduced_costs(&self, tier: usize) -> &[T] {
        &self.reduced[tier]
    }

    pub fn values(&self) -> &[T] {
        &self.value
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    /// Nonbasic columns whose reduced cost is zero in every tier: entering
    /// any of them moves along an optimal face (or stays, if degenerate).
    pub fn zero_reduced_nonbasic(&self) -> Vec<usize> {
        let basic: std::collections::HashSet<_> = self.basis.iter().copied().collect();
        (0..self.ncols)
            .filter(|j| !basic.contains(j))
            .filter(|&j| self.reduced.first().is_some_and(|t| t[j].is_negligible()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Optimal,
    Unbounded,
}

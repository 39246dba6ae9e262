//! Bayes-optimal post-processing of a mechanism for a given user.

use crate::error::{Error, Result};
use crate::loss::UserModel;
use crate::mechanism::{Mechanism, Remap};
use crate::scalar::{div, mul, sum, Scalar};

/// Largest number of deterministic remaps the brute-force oracle enumerates.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Per-response posterior over results. `None` marks a response with zero
/// marginal probability under the prior.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior<T> {
    responses: Vec<i64>,
    columns: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Posterior<T> {
    pub fn responses(&self) -> &[i64] {
        &self.responses
    }

    /// Posterior at the `col`-th response, or `None` when unreachable.
    pub fn at(&self, col: usize) -> Option<&[T]> {
        self.columns[col].as_deref()
    }

    pub fn is_reachable(&self, col: usize) -> bool {
        self.columns[col].is_some()
    }
}

fn check_dims<T: Scalar>(x: &Mechanism<T>, u: &UserModel) -> Result<()> {
    if x.n() != u.n() {
        return Err(Error::Dimension(format!(
            "mechanism covers results 0..={}, user prior covers 0..={}",
            x.n(),
            u.n()
        )));
    }
    Ok(())
}

/// `p(i | r) = x[i][r] p_i / Σ_i' x[i'][r] p_i'`.
pub fn posterior<T: Scalar>(x: &Mechanism<T>, u: &UserModel) -> Result<Posterior<T>> {
    check_dims(x, u)?;
    let prior: Vec<T> = u.prior().iter().map(T::from_rational).collect();
    let columns = (0..x.responses().len())
        .map(|c| {
            let joint: Vec<T> = prior.iter().zip(x.rows()).map(|(p, row)| mul(p, &row[c])).collect();
            let marginal = sum(&joint);
            if marginal.is_negligible() {
                None
            } else {
                Some(joint.iter().map(|j| div(j, &marginal)).collect())
            }
        })
        .collect();
    Ok(Posterior { responses: x.responses().to_vec(), columns })
}

/// Deterministic remap onto `0..=n` sending each reachable response to the
/// result minimizing posterior expected loss, ties to the smallest result.
/// Unreachable responses go to result 0.
///
/// Minimizing `Σ_i p(i|r) l(i, t)` is the same as minimizing the unnormalized
/// `Σ_i p_i x[i][r] l(i, t)`, which is what is computed.
pub fn optimal_remap<T: Scalar>(x: &Mechanism<T>, u: &UserModel) -> Result<Remap<T>> {
    let costs = decision_costs(x, u)?;
    let post = posterior(x, u)?;
    let image: Vec<usize> =
        costs.iter().enumerate().map(|(c, row)| if post.is_reachable(c) { argmin(row) } else { 0 }).collect();
    Remap::deterministic(x.responses().to_vec(), (0..=x.n() as i64).collect(), &image)
}

/// `cost[r][t] = Σ_i p_i x[i][r] l(i, t)`: the loss contributed by response
/// `r` when it is reinterpreted as result `t`.
pub fn decision_costs<T: Scalar>(x: &Mechanism<T>, u: &UserModel) -> Result<Vec<Vec<T>>> {
    check_dims(x, u)?;
    let n = x.n();
    let targets: Vec<i64> = (0..=n as i64).collect();
    let table = u.loss().table::<T>(n, &targets)?;
    let prior: Vec<T> = u.prior().iter().map(T::from_rational).collect();
    Ok((0..x.responses().len())
        .map(|c| {
            (0..=n)
                .map(|t| {
                    let mut acc = T::zero();
                    for i in 0..=n {
                        let w = &x.rows()[i][c];
                        if w.is_zero() || prior[i].is_zero() {
                            continue;
                        }
                        acc += &mul(&mul(&prior[i], w), &table[i][t]);
                    }
                    acc
                })
                .collect()
        })
        .collect())
}

fn argmin<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        if v < &values[best] && !v.approx_eq(&values[best]) {
            best = k;
        }
    }
    best
}

/// Exhaustive search over every deterministic remap of `x`'s responses
/// onto `0..=n`. Returns a loss-minimizing remap (first in lexicographic
/// order of images) and its loss.
pub fn brute_force_optimal_remap<T: Scalar>(x: &Mechanism<T>, u: &UserModel) -> Result<(Remap<T>, T)> {
    check_dims(x, u)?;
    let width = x.responses().len();
    let choices = x.n() as u64 + 1;
    let candidates = (choices as u128).checked_pow(width as u32);
    match candidates {
        Some(c) if c <= BRUTE_FORCE_LIMIT as u128 => {}
        _ => return Err(Error::Capacity { candidates: format!("{}^{}", choices, width), limit: BRUTE_FORCE_LIMIT }),
    }
    let costs = decision_costs(x, u)?;
    let mut image = vec![0usize; width];
    let mut best_image = image.clone();
    let mut best: Option<T> = None;
    loop {
        let mut total = T::zero();
        for (c, &t) in image.iter().enumerate() {
            total += &costs[c][t];
        }
        if best.as_ref().is_none_or(|b| total < *b && !total.approx_eq(b)) {
            best = Some(total);
            best_image.clone_from(&image);
        }
        // odometer increment, last position fastest
        let mut pos = width;
        loop {
            if pos == 0 {
                let remap = Remap::deterministic(x.responses().to_vec(), (0..=x.n() as i64).collect(), &best_image)?;
                return Ok((remap, best.unwrap_or_else(T::zero)));
            }
            pos -= 1;
            image[pos] += 1;
            if image[pos] < choices as usize {
                break;
            }
            image[pos] = 0;
        }
    }
}

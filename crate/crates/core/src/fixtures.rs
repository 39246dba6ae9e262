//! Worked instances with known answers: the n = 5, alpha = 1/2 mechanism
//! optimal for a `|i - r|^1.5` user, its constraint matrix, the two-point
//! threshold example, and the two-user database counterexample.

use crate::analysis::{ConstraintMatrix, Symbol};
use crate::loss::{LossFunction, UserModel};
use crate::mechanism::{Mechanism, PrivacyLevel};
use crate::{ratio, Rational};

pub fn half() -> PrivacyLevel {
    PrivacyLevel::from_ratio(1, 2).expect("valid")
}

fn rows(entries: &[&[(i64, i64)]]) -> Vec<Vec<Rational>> {
    entries.iter().map(|row| row.iter().map(|&(p, q)| ratio(p, q)).collect()).collect()
}

/// Optimal 1/2-private mechanism at n = 5 for [`reference_user`].
pub fn reference_vertex() -> Mechanism {
    Mechanism::over_results(rows(&[
        &[(2, 3), (0, 1), (1, 4), (1, 24), (1, 48), (1, 48)],
        &[(1, 3), (0, 1), (1, 2), (1, 12), (1, 24), (1, 24)],
        &[(1, 6), (0, 1), (1, 2), (1, 6), (1, 12), (1, 12)],
        &[(1, 12), (0, 1), (1, 4), (1, 3), (1, 6), (1, 6)],
        &[(1, 24), (0, 1), (1, 8), (1, 6), (1, 3), (1, 3)],
        &[(1, 48), (0, 1), (1, 16), (1, 12), (1, 6), (2, 3)],
    ]))
    .expect("square")
}

/// Prior (1/4, 0, 1/4, 0, 1/4, 1/4) with loss `|i - r|^1.5`.
pub fn reference_user() -> UserModel {
    UserModel::new(
        vec![ratio(1, 4), ratio(0, 1), ratio(1, 4), ratio(0, 1), ratio(1, 4), ratio(1, 4)],
        LossFunction::power(ratio(3, 2)).expect("valid exponent"),
    )
    .expect("valid prior")
}

/// Constraint matrix of [`reference_vertex`] at alpha = 1/2.
pub fn reference_constraint_matrix() -> ConstraintMatrix {
    use Symbol::{Down as D, Slack as S, Up as U, Zero as Z};
    ConstraintMatrix::from_grid(vec![
        vec![D, Z, U, U, U, U],
        vec![D, Z, S, U, U, U],
        vec![D, Z, D, U, U, U],
        vec![D, Z, D, D, U, U],
        vec![D, Z, D, D, D, U],
    ])
    .expect("well formed")
}

/// Binary loss, half the prior on 0 and half on 5.
pub fn endpoint_user() -> UserModel {
    let mut prior = vec![ratio(0, 1); 6];
    prior[0] = ratio(1, 2);
    prior[5] = ratio(1, 2);
    UserModel::new(prior, LossFunction::binary()).expect("valid prior")
}

/// Rows of the first user's non-oblivious optimum over responses (1, 2),
/// keyed by the set of database rows holding a 1.
pub fn counterexample_rows() -> Vec<(Vec<usize>, [Rational; 2])> {
    vec![
        (vec![1], [ratio(11, 12), ratio(1, 12)]),
        (vec![2], [ratio(2, 3), ratio(1, 3)]),
        (vec![1, 3], [ratio(5, 6), ratio(1, 6)]),
        (vec![2, 3], [ratio(1, 3), ratio(2, 3)]),
    ]
}

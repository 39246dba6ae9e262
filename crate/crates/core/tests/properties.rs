use num_traits::{One, Zero};
use proptest::prelude::*;

use privopt::analysis::trial_rng;
use privopt::json;
use privopt::lp::{LinearProgram, LpOutcome, Sense};
use privopt::mechanism::PrivacyReport;
use privopt::nonoblivious::{obliviate, random_private_mechanism, DatabaseSpace, FullMechanism};
use privopt::remap::{brute_force_optimal_remap, decision_costs, optimal_remap, posterior};
use privopt::{
    check_differential_privacy, check_row_stochastic, compose, expected_loss, ratio, LossFunction, LossKind, Mechanism,
    PrivacyLevel, Rational, Remap, UserModel,
};

fn stochastic_rows(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<Rational>>> {
    prop::collection::vec(prop::collection::vec(0i64..6, cols), rows).prop_map(|weights| {
        weights
            .into_iter()
            .map(|w| {
                let total: i64 = w.iter().sum();
                if total == 0 {
                    let mut row = vec![Rational::zero(); w.len()];
                    row[0] = Rational::one();
                    row
                } else {
                    w.iter().map(|&x| ratio(x, total)).collect()
                }
            })
            .collect()
    })
}

fn mechanism(n: usize) -> impl Strategy<Value = Mechanism> {
    stochastic_rows(n + 1, n + 1).prop_map(|rows| Mechanism::over_results(rows).unwrap())
}

fn remap(sources: usize, targets: usize) -> impl Strategy<Value = Remap> {
    stochastic_rows(sources, targets)
        .prop_map(move |rows| Remap::new((0..sources as i64).collect(), (0..targets as i64).collect(), rows).unwrap())
}

fn alpha() -> impl Strategy<Value = PrivacyLevel> {
    (1i64..10).prop_map(|k| PrivacyLevel::from_ratio(k, 10).unwrap())
}

/// `alpha`-private mechanism over `0..=n`: column `r` is `c_r β^{g_r(i)}`
/// with `g_r` moving by at most one per row and `β = (1 + alpha) / 2`;
/// normalizing rows then changes ratios by at most `β² >= alpha`.
fn private_mechanism(n: usize) -> impl Strategy<Value = (PrivacyLevel, Mechanism)> {
    (alpha(), prop::collection::vec(1i64..5, n + 1), prop::collection::vec(prop::collection::vec(-1i32..=1, n), n + 1))
        .prop_map(move |(a, scale, steps)| {
            let beta = (Rational::one() + a.alpha()) / ratio(2, 1);
            let rows: Vec<Vec<Rational>> = (0..=n)
                .map(|i| {
                    let weights: Vec<Rational> = (0..=n)
                        .map(|r| {
                            let g: i32 = steps[r][..i].iter().sum();
                            let p = num_traits::pow(beta.clone(), g.unsigned_abs() as usize);
                            let w = if g >= 0 { p } else { Rational::one() / p };
                            ratio(scale[r], 1) * w
                        })
                        .collect();
                    let total: Rational = weights.iter().sum();
                    weights.into_iter().map(|w| w / &total).collect()
                })
                .collect();
            (a, Mechanism::over_results(rows).unwrap())
        })
}

fn loss() -> impl Strategy<Value = LossFunction> {
    prop_oneof![
        Just(LossFunction::absolute()),
        Just(LossFunction::squared()),
        Just(LossFunction::binary()),
        (1i64..6).prop_map(|k| LossFunction::with_digits(LossKind::Power { exponent: ratio(k, 2) }, 32).unwrap()),
    ]
}

fn user(n: usize) -> impl Strategy<Value = UserModel> {
    (prop::collection::vec(0i64..5, n + 1), loss()).prop_map(|(w, l)| {
        let total: i64 = w.iter().sum();
        let prior = if total == 0 {
            let mut p = vec![Rational::zero(); w.len()];
            p[0] = Rational::one();
            p
        } else {
            w.iter().map(|&x| ratio(x, total)).collect()
        };
        UserModel::new(prior, l).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compose_preserves_stochasticity(
        (x, y) in (1usize..5).prop_flat_map(|n| (mechanism(n), remap(n + 1, n + 1)))
    ) {
        let out = compose(&y, &x).unwrap();
        prop_assert!(check_row_stochastic(out.rows()).unwrap().is_valid());
    }

    #[test]
    fn compose_preserves_privacy(
        ((a, x), y) in (1usize..5).prop_flat_map(|n| (private_mechanism(n), remap(n + 1, n + 1)))
    ) {
        prop_assert!(check_differential_privacy(&x, &a).is_private());
        prop_assert!(check_differential_privacy(&compose(&y, &x).unwrap(), &a).is_private());
    }

    #[test]
    fn composed_loss_expands(
        (x, y, u) in (1usize..4).prop_flat_map(|n| (mechanism(n), remap(n + 1, n + 1), user(n)))
    ) {
        let n = x.n();
        let mut direct = Rational::zero();
        for i in 0..=n {
            for (rp, x_ir) in x.row(i).iter().enumerate() {
                for (r, y_rr) in y.rows()[rp].iter().enumerate() {
                    direct += &u.prior()[i] * x_ir * y_rr * u.loss().value(i as i64, r as i64).unwrap();
                }
            }
        }
        prop_assert_eq!(expected_loss(&compose(&y, &x).unwrap(), &u).unwrap(), direct);
    }

    #[test]
    fn privacy_check_is_symmetric(x in (1usize..5).prop_flat_map(mechanism), a in alpha()) {
        let mut rows = x.rows().to_vec();
        rows.reverse();
        let flipped = Mechanism::over_results(rows).unwrap();
        let forward = check_differential_privacy(&x, &a).is_private();
        prop_assert_eq!(forward, check_differential_privacy(&flipped, &a).is_private());
        if let PrivacyReport::Violation { row, column } = check_differential_privacy(&x, &a) {
            let (hi, lo) = (&x.rows()[row][column], &x.rows()[row + 1][column]);
            prop_assert!(a.alpha() * hi > *lo || a.alpha() * lo > *hi);
        }
    }

    #[test]
    fn bayes_remap_beats_every_remap(
        (x, y, u) in (1usize..4).prop_flat_map(|n| (mechanism(n), remap(n + 1, n + 1), user(n)))
    ) {
        let best = expected_loss(&compose(&optimal_remap(&x, &u).unwrap(), &x).unwrap(), &u).unwrap();
        prop_assert!(best <= expected_loss(&compose(&y, &x).unwrap(), &u).unwrap());
        let (_, brute) = brute_force_optimal_remap(&x, &u).unwrap();
        prop_assert_eq!(best, brute);
    }

    #[test]
    fn posteriors_sum_to_one((x, u) in (1usize..5).prop_flat_map(|n| (mechanism(n), user(n)))) {
        let post = posterior(&x, &u).unwrap();
        for c in 0..x.responses().len() {
            if let Some(p) = post.at(c) {
                prop_assert_eq!(p.iter().sum::<Rational>(), Rational::one());
            }
        }
    }

    #[test]
    fn randomized_remaps_do_not_help((x, u) in (1usize..4).prop_flat_map(|n| (mechanism(n), user(n)))) {
        // LP over all row-stochastic remaps; the loss is linear in y.
        let n = x.n();
        let width = n + 1;
        let costs = decision_costs(&x, &u).unwrap();
        let mut lp = LinearProgram::new(width * width);
        for r in 0..width {
            lp.add_constraint((0..width).map(|t| (r * width + t, Rational::one())).collect(), Sense::Eq, Rational::one(), format!("row{r}")).unwrap();
        }
        lp.push_objective(costs.into_iter().flatten().collect()).unwrap();
        let sol = lp.solve().unwrap().optimal().unwrap();
        let bayes = expected_loss(&compose(&optimal_remap(&x, &u).unwrap(), &x).unwrap(), &u).unwrap();
        prop_assert_eq!(sol.objective[0].clone(), bayes);
    }

    #[test]
    fn mechanism_json_round_trips((a, x) in (1usize..6).prop_flat_map(private_mechanism)) {
        let text = json::to_pretty(&json::mechanism_to_value(&x, Some(&a)));
        let (back, alpha) = json::mechanism_from_value(&json::parse(&text).unwrap()).unwrap();
        prop_assert_eq!(&back, &x);
        prop_assert_eq!(alpha.as_ref(), Some(&a));
        prop_assert_eq!(json::to_pretty(&json::mechanism_to_value(&back, alpha.as_ref())), text);
    }

    #[test]
    fn user_json_round_trips(u in (1usize..6).prop_flat_map(user)) {
        prop_assert_eq!(json::user_from_value(&json::user_to_value(&u), 64).unwrap(), u);
    }
}

/// Every vertex of `{x >= 0, rows}` in two or three variables, by solving
/// each choice of active constraints.
fn brute_force_minimum(rows: &[(Vec<i64>, Sense, i64)], costs: &[i64], vars: usize) -> Option<Rational> {
    let mut normals: Vec<(Vec<Rational>, Rational)> =
        rows.iter().map(|(a, _, b)| (a.iter().map(|&v| ratio(v, 1)).collect(), ratio(*b, 1))).collect();
    for j in 0..vars {
        let mut e = vec![Rational::zero(); vars];
        e[j] = Rational::one();
        normals.push((e, Rational::zero()));
    }
    let feasible = |x: &[Rational]| {
        x.iter().all(|v| *v >= Rational::zero())
            && rows.iter().all(|(a, s, b)| {
                let lhs: Rational = a.iter().zip(x).map(|(c, v)| ratio(*c, 1) * v).sum();
                let rhs = ratio(*b, 1);
                match s {
                    Sense::Le => lhs <= rhs,
                    Sense::Ge => lhs >= rhs,
                    Sense::Eq => lhs == rhs,
                }
            })
    };
    let mut best: Option<Rational> = None;
    let m = normals.len();
    let mut pick = |idx: &[usize]| {
        let mut sys: Vec<Vec<Rational>> = idx
            .iter()
            .map(|&k| {
                let mut row = normals[k].0.clone();
                row.push(normals[k].1.clone());
                row
            })
            .collect();
        for col in 0..vars {
            let Some(p) = (col..vars).find(|&r| !sys[r][col].is_zero()) else { return };
            sys.swap(col, p);
            let piv = sys[col][col].clone();
            for v in sys[col].iter_mut() {
                *v /= &piv;
            }
            let prow = sys[col].clone();
            for (r, row) in sys.iter_mut().enumerate() {
                if r != col && !row[col].is_zero() {
                    let f = row[col].clone();
                    for (a, b) in row.iter_mut().zip(&prow) {
                        *a -= &f * b;
                    }
                }
            }
        }
        let x: Vec<Rational> = sys.iter().map(|r| r[vars].clone()).collect();
        if feasible(&x) {
            let v: Rational = costs.iter().zip(&x).map(|(c, v)| ratio(*c, 1) * v).sum();
            best = Some(best.take().map_or(v.clone(), |b: Rational| b.min(v)));
        }
    };
    // all index subsets of size `vars`
    let mut idx: Vec<usize> = (0..vars).collect();
    loop {
        pick(&idx);
        let mut k = vars;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - vars + k {
                idx[k] += 1;
                for j in k + 1..vars {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn sense() -> impl Strategy<Value = Sense> {
    prop_oneof![Just(Sense::Le), Just(Sense::Ge), Just(Sense::Eq)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_matches_vertex_enumeration(
        vars in 2usize..4,
        rows in prop::collection::vec((prop::collection::vec(-3i64..4, 3), sense(), -2i64..6), 1..4),
        costs in prop::collection::vec(0i64..5, 3),
    ) {
        // A box keeps every instance bounded.
        let mut rows: Vec<(Vec<i64>, Sense, i64)> = rows.into_iter().map(|(a, s, b)| (a[..vars].to_vec(), s, b)).collect();
        rows.push((vec![1; vars], Sense::Le, 10));
        let costs = &costs[..vars];
        let mut lp = LinearProgram::new(vars);
        for (k, (a, s, b)) in rows.iter().enumerate() {
            lp.add_constraint(a.iter().enumerate().map(|(j, &v)| (j, ratio(v, 1))).collect(), *s, ratio(*b, 1), format!("r{k}")).unwrap();
        }
        lp.push_objective(costs.iter().map(|&c| ratio(c, 1)).collect()).unwrap();
        let expected = brute_force_minimum(&rows, costs, vars);
        match lp.solve().unwrap() {
            LpOutcome::Optimal(sol) => {
                prop_assert!(lp.is_feasible(&sol.x));
                prop_assert_eq!(Some(sol.objective[0].clone()), expected);
            }
            LpOutcome::Infeasible(cert) => {
                prop_assert!(cert.verify(&lp));
                prop_assert_eq!(expected, None);
            }
            LpOutcome::Unbounded => prop_assert!(false, "boxed problem reported unbounded"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn averaging_is_idempotent_and_private(rows in 1usize..4, a in alpha(), seed in any::<u64>()) {
        let space = DatabaseSpace::binary(rows).unwrap();
        let mut rng = trial_rng(seed, 0);
        let x = random_private_mechanism(&mut rng, &space, &a);
        prop_assert!(x.is_private(&space, &a));
        let once = obliviate(&x, &space).unwrap();
        prop_assert!(check_differential_privacy(&once, &a).is_private());
        let lifted = FullMechanism::lift(&once, &space).unwrap();
        prop_assert!(lifted.is_oblivious(&space));
        prop_assert_eq!(obliviate(&lifted, &space).unwrap(), once);
    }
}

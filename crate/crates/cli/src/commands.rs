use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use itertools::Itertools;
use serde_json::{json, Value};

use privopt::analysis::{
    constraint_matrix, derive_remap_from_constraint_matrix, factorization_sweep, remap_oracle_sweep,
    validate_vertex_structure, verify_uniqueness, SlackAccounting, SweepConfig,
};
use privopt::json::{self as pj, rational, to_pretty};
use privopt::mechanisms::{
    geometric_two_point_loss, laplace_geometric_ratio, laplace_two_point_loss, truncated_geometric, GeometricSpec,
};
use privopt::nonoblivious::{
    check_counterexample_infeasibility, counterexample_at, obliviate, obliviation_sweep, worst_case_expected_loss,
    FullMechanism,
};
use privopt::optlp::{build_lp, solve_vertex};
use privopt::remap::optimal_remap;
use privopt::scalar::{format_rational, to_decimal_string};
use privopt::{check_differential_privacy, compose, expected_loss, Mechanism, PrivacyLevel, Rational, UserModel};

use crate::report::{write_csv, write_text, RunReport};
use crate::{
    AnalyzeArgs, Cli, Command, CompareArgs, MechCommand, NonobliviousCommand, OptimalArgs, Outcome, RemapArgs,
    SweepArgs, VerifyCommand,
};

/// Largest n for which `verify uniqueness` walks every permutation.
const MAX_PERMUTATION_N: usize = 6;

pub fn run(cli: Cli, args: &[String]) -> Result<Outcome> {
    let digits = cli.precision;
    match cli.command {
        Command::Mech(MechCommand::Geometric { alpha, n, out }) => {
            let g = truncated_geometric(&GeometricSpec::new(alpha.clone(), n)?);
            emit(out.as_deref(), &pj::mechanism_to_value(&g, Some(&alpha)))?;
            Ok(Outcome::Success)
        }
        Command::Optimal(a) => optimal(a, digits),
        Command::Remap(a) => remap(a, digits),
        Command::Analyze(a) => analyze(a),
        Command::Verify(v) => verify(v, args, digits),
        Command::Nonoblivious(c) => nonoblivious(c, digits),
        Command::CompareLaplace(a) => compare_laplace(a, digits),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    pj::parse(&text).with_context(|| format!("{} is not valid JSON", path.display()))
}

fn read_user(path: &Path, digits: u32) -> Result<UserModel> {
    pj::user_from_value(&read_json(path)?, digits).with_context(|| format!("in user file {}", path.display()))
}

fn read_mechanism(path: &Path) -> Result<(Mechanism, Option<PrivacyLevel>)> {
    pj::mechanism_from_value(&read_json(path)?).with_context(|| format!("in mechanism file {}", path.display()))
}

/// Writes `v` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, v: &Value) -> Result<()> {
    match out {
        Some(p) => write_text(p, &to_pretty(v)),
        None => {
            print!("{}", to_pretty(v));
            Ok(())
        }
    }
}

fn short_decimal(q: &Rational, places: usize) -> String {
    let s = to_decimal_string(q, places);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn optimal(a: OptimalArgs, digits: u32) -> Result<Outcome> {
    let user = read_user(&a.user, digits)?;
    let n = a.n.unwrap_or(user.n());
    if n != user.n() {
        bail!("--n {n} does not match the user's prior over 0..={}", user.n());
    }
    let lp = build_lp(&user, &a.alpha, n)?;
    let sol = solve_vertex(&lp)?;
    emit(a.out.as_deref(), &pj::mechanism_to_value(&sol.mechanism, Some(&a.alpha)))?;
    if let Some(path) = a.report.as_deref() {
        let rank = sol.tight_rank(&lp);
        write_text(path, &to_pretty(&pj::vertex_report(&sol, &a.alpha, n, Some(rank))))?;
    }
    if a.out.is_some() {
        println!("objective {} ({})", format_rational(&sol.objective), short_decimal(&sol.objective, 20));
    }
    Ok(Outcome::Success)
}

fn remap(a: RemapArgs, digits: u32) -> Result<Outcome> {
    let (x, _) = read_mechanism(&a.mech)?;
    let user = read_user(&a.user, digits)?;
    let y = optimal_remap(&x, &user)?;
    let before = expected_loss(&x, &user)?;
    let after = expected_loss(&compose(&y, &x)?, &user)?;
    emit(a.out.as_deref(), &pj::remap_to_value(&y))?;
    if a.out.is_some() {
        println!("loss before remap {} after {}", format_rational(&before), format_rational(&after));
    }
    Ok(Outcome::Success)
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    let (x, stored) = read_mechanism(&a.mech)?;
    let Some(alpha) = a.alpha.or(stored) else {
        bail!("no alpha: pass --alpha or store one in {}", a.mech.display());
    };
    let c = constraint_matrix(&x, &alpha)?;
    let acc = SlackAccounting::from_matrix(&c);
    let structure = validate_vertex_structure(&c, &acc);
    let (remap, reproduces) = if structure.all_pass() {
        let y = derive_remap_from_constraint_matrix(&c, &acc, x.n())?;
        let g = truncated_geometric(&GeometricSpec::new(alpha.clone(), x.n())?);
        let same = compose(&y, &g)? == x;
        (pj::remap_to_value(&y), json!(same))
    } else {
        (Value::Null, Value::Null)
    };
    let v = json!({
        "alpha": rational(alpha.alpha()),
        "n": x.n(),
        "constraint_matrix": pj::constraint_matrix_to_value(&c),
        "structure": pj::structure_to_value(&structure),
        "derived_remap": remap,
        "reproduces_mechanism": reproduces,
    });
    print!("{}", c.render());
    match a.out.as_deref() {
        Some(p) => write_text(p, &to_pretty(&v))?,
        None => print!("{}", to_pretty(&v)),
    }
    Ok(Outcome::Success)
}

fn sweep_config(s: &SweepArgs, default_n: usize, digits: u32) -> SweepConfig {
    SweepConfig { max_n: s.n.unwrap_or(default_n), alphas: s.alphas.clone(), trials: s.trials, seed: s.seed, digits }
}

fn finish(report: &RunReport, path: Option<&Path>, label: &str) -> Result<Outcome> {
    report.write(path)?;
    println!("{label}: {}/{} trials passed", report.passed(), report.total());
    Ok(if report.all_passed() { Outcome::Success } else { Outcome::VerificationFailed })
}

fn verify(v: VerifyCommand, args: &[String], digits: u32) -> Result<Outcome> {
    match v {
        VerifyCommand::Theorem1(s) => {
            let config = sweep_config(&s, 8, digits);
            let mut report = RunReport::new(args, Some(s.seed), s.timing);
            let mut rows = Vec::new();
            for (t, r) in factorization_sweep(&config)?.iter().enumerate() {
                report.push(pj::factorization_to_value(r), r.passed());
                rows.push(vec![
                    t.to_string(),
                    r.n.to_string(),
                    format_rational(r.alpha.alpha()),
                    r.user.loss().kind().name().to_string(),
                    format_rational(&r.remap_loss),
                    format_rational(&r.lp_loss),
                    short_decimal(&r.difference, 40),
                    r.passed().to_string(),
                ]);
            }
            if let Some(p) = s.csv.as_deref() {
                write_csv(p, &["trial", "n", "alpha", "loss", "remap_loss", "lp_loss", "difference", "passed"], &rows)?;
            }
            finish(&report, s.report.as_deref(), "theorem1")
        }
        VerifyCommand::RemapOracle(s) => {
            let config = sweep_config(&s, 4, digits);
            let mut report = RunReport::new(args, Some(s.seed), s.timing);
            let mut rows = Vec::new();
            for (t, r) in remap_oracle_sweep(&config)?.iter().enumerate() {
                report.push(pj::remap_record_to_value(r), r.passed);
                rows.push(vec![
                    t.to_string(),
                    r.n.to_string(),
                    r.user.loss().kind().name().to_string(),
                    format_rational(&r.bayes_loss),
                    format_rational(&r.brute_force_loss),
                    r.passed.to_string(),
                ]);
            }
            if let Some(p) = s.csv.as_deref() {
                write_csv(p, &["trial", "n", "loss", "bayes_loss", "brute_force_loss", "passed"], &rows)?;
            }
            finish(&report, s.report.as_deref(), "remap-oracle")
        }
        VerifyCommand::Proposition1 { rows: sizes, sweep: s } => {
            if s.n.is_some() {
                bail!("proposition1 draws database sizes from --rows, not --n");
            }
            let records = obliviation_sweep(&sizes, &s.alphas, s.trials, s.seed, digits)?;
            let mut report = RunReport::new(args, Some(s.seed), s.timing);
            let mut rows = Vec::new();
            for (t, r) in records.iter().enumerate() {
                report.push(pj::obliviation_to_value(r), r.passed());
                rows.push(vec![
                    t.to_string(),
                    r.rows.to_string(),
                    format_rational(r.alpha.alpha()),
                    format_rational(&r.original_loss),
                    format_rational(&r.averaged_loss),
                    r.passed().to_string(),
                ]);
            }
            if let Some(p) = s.csv.as_deref() {
                write_csv(p, &["trial", "rows", "alpha", "original_loss", "averaged_loss", "passed"], &rows)?;
            }
            finish(&report, s.report.as_deref(), "proposition1")
        }
        VerifyCommand::Uniqueness { alpha, n, mech, report: path, timing } => {
            let mut report = RunReport::new(args, None, timing);
            match mech {
                Some(p) => {
                    let (x, _) = read_mechanism(&p)?;
                    let verdict = verify_uniqueness(&alpha, n, &x)?;
                    report.push(pj::uniqueness_to_value(&verdict), verdict.equivalent());
                }
                None => uniqueness_permutations(&alpha, n, &mut report)?,
            }
            finish(&report, path.as_deref(), "uniqueness")
        }
    }
}

fn uniqueness_permutations(alpha: &PrivacyLevel, n: usize, report: &mut RunReport) -> Result<()> {
    if n > MAX_PERMUTATION_N {
        bail!("checking every permutation needs n <= {MAX_PERMUTATION_N}; pass --mech for a single mechanism");
    }
    let g = truncated_geometric(&GeometricSpec::new(alpha.clone(), n)?);
    let labels: Vec<i64> = (0..=n as i64).collect();
    for order in (0..=n).permutations(n + 1) {
        let candidate = g.permute_columns(&order)?.relabel(labels.clone())?;
        let verdict = verify_uniqueness(alpha, n, &candidate)?;
        let mut record = pj::uniqueness_to_value(&verdict);
        record["columns"] = json!(order);
        report.push(record, verdict.equivalent());
    }
    Ok(())
}

fn nonoblivious(c: NonobliviousCommand, digits: u32) -> Result<Outcome> {
    match c {
        NonobliviousCommand::Counterexample { alpha, out } => {
            let cert = if alpha.alpha() == &privopt::ratio(1, 2) {
                check_counterexample_infeasibility()
            } else {
                counterexample_at(alpha.alpha())
            };
            let cert = match cert {
                Ok(c) => c,
                Err(privopt::Error::Lp(msg)) => {
                    println!("no infeasibility certificate at alpha {}: {msg}", format_rational(alpha.alpha()));
                    return Ok(Outcome::VerificationFailed);
                }
                Err(e) => return Err(e.into()),
            };
            let mut v = pj::counterexample_to_value(&cert);
            v["alpha"] = rational(alpha.alpha());
            emit(out.as_deref(), &v)?;
            Ok(if cert.verifies() { Outcome::Success } else { Outcome::VerificationFailed })
        }
        NonobliviousCommand::Obliviate { mech, space, alpha, user, out } => {
            let space_value = read_json(&space)?;
            let space =
                pj::space_from_value(&space_value).with_context(|| format!("in space file {}", space.display()))?;
            let (x, stored) = pj::full_mechanism_from_value(&read_json(&mech)?, &space)
                .with_context(|| format!("in mechanism file {}", mech.display()))?;
            let alpha = alpha.or(stored);
            let averaged = obliviate(&x, &space)?;
            emit(out.as_deref(), &pj::mechanism_to_value(&averaged, alpha.as_ref()))?;
            let mut outcome = Outcome::Success;
            if let Some(a) = &alpha {
                let before = x.is_private(&space, a);
                let after = check_differential_privacy(&averaged, a).is_private();
                eprintln!("private at alpha {}: input {before}, averaged {after}", rational(a.alpha()));
                if before && !after {
                    outcome = Outcome::VerificationFailed;
                }
            }
            if let Some(path) = user.as_deref() {
                let u = read_user(path, digits)?;
                let original = worst_case_expected_loss(&x, &u, &space)?;
                let lifted = FullMechanism::lift(&averaged, &space)?;
                let averaged_loss = worst_case_expected_loss(&lifted, &u, &space)?;
                eprintln!(
                    "worst-case loss: input {} averaged {}",
                    format_rational(&original),
                    format_rational(&averaged_loss)
                );
                if averaged_loss > original {
                    outcome = Outcome::VerificationFailed;
                }
            }
            Ok(outcome)
        }
    }
}

fn compare_laplace(a: CompareArgs, digits: u32) -> Result<Outcome> {
    let mut rows = Vec::new();
    for alpha in &a.alpha {
        let geo = geometric_two_point_loss(alpha);
        let lap = laplace_two_point_loss(alpha, digits);
        let ratio = laplace_geometric_ratio(alpha, digits);
        let (g, l, r) = (format_rational(&geo), short_decimal(&lap, 30), short_decimal(&ratio, 12));
        println!("alpha {}: geometric {g}, laplace {l}, ratio {r}", format_rational(alpha.alpha()));
        rows.push(vec![format_rational(alpha.alpha()), g, short_decimal(&geo, 30), l, r]);
    }
    if let Some(p) = a.csv.as_deref() {
        write_csv(p, &["alpha", "geometric", "geometric_decimal", "laplace", "ratio"], &rows)?;
    }
    Ok(Outcome::Success)
}

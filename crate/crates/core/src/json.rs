//! Canonical JSON for mechanisms, users, remaps and reports.
//!
//! Rationals are written as lowest-terms `"p/q"` strings (`"p"` when the
//! denominator is 1) and parsed from `"p/q"`, integers or decimals. Object
//! keys come out sorted, so identical values serialize to identical bytes.

use serde_json::{json, Map, Value};

use crate::analysis::{ConstraintMatrix, FactorizationRecord, RemapRecord, StructureReport, UniquenessVerdict};
use crate::error::{Error, Result};
use crate::loss::{LossFunction, LossKind, UserModel};
use crate::mechanism::{Mechanism, PrivacyLevel, Remap};
use crate::nonoblivious::{Counterexample, DatabaseSpace, FullMechanism, ObliviationRecord};
use crate::optlp::{OptimalityCheck, RowKind, Tight, VertexSolution};
use crate::scalar::{format_rational, parse_rational, to_decimal_string};
use crate::Rational;

/// Digits after the point in the `*_decimal` companions of report values.
pub const REPORT_DECIMALS: usize = 40;

fn field_error(field: &str, message: impl Into<String>) -> Error {
    Error::Field { field: field.to_string(), message: message.into() }
}

pub fn rational(q: &Rational) -> Value {
    Value::String(format_rational(q))
}

fn rational_rows(rows: &[Vec<Rational>]) -> Value {
    Value::Array(rows.iter().map(|row| Value::Array(row.iter().map(rational).collect())).collect())
}

/// `q` to [`REPORT_DECIMALS`] places, for human readers of reports.
pub fn decimal(q: &Rational) -> Value {
    Value::String(to_decimal_string(q, REPORT_DECIMALS))
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| field_error(key, "missing"))
}

fn parse_rational_value(v: &Value, field: &str) -> Result<Rational> {
    match v {
        Value::String(s) => {
            parse_rational(s).map_err(|_| field_error(field, format!("cannot parse {s:?} as a rational")))
        }
        Value::Number(n) => {
            parse_rational(&n.to_string()).map_err(|_| field_error(field, format!("cannot parse {n} as a rational")))
        }
        _ => Err(field_error(field, "expected a rational string")),
    }
}

fn parse_vector(v: &Value, field: &str) -> Result<Vec<Rational>> {
    v.as_array()
        .ok_or_else(|| field_error(field, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(k, x)| parse_rational_value(x, &format!("{field}[{k}]")))
        .collect()
}

fn parse_matrix(v: &Value, field: &str) -> Result<Vec<Vec<Rational>>> {
    v.as_array()
        .ok_or_else(|| field_error(field, "expected an array of rows"))?
        .iter()
        .enumerate()
        .map(|(k, row)| parse_vector(row, &format!("{field}[{k}]")))
        .collect()
}

fn parse_labels(v: &Value, field: &str) -> Result<Vec<i64>> {
    v.as_array()
        .ok_or_else(|| field_error(field, "expected an array of integers"))?
        .iter()
        .enumerate()
        .map(|(k, x)| x.as_i64().ok_or_else(|| field_error(&format!("{field}[{k}]"), "expected an integer")))
        .collect()
}

fn parse_usize(v: &Value, field: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| field_error(field, "expected a non-negative integer"))
}

pub fn mechanism_to_value(m: &Mechanism, alpha: Option<&PrivacyLevel>) -> Value {
    let mut obj = Map::new();
    if let Some(a) = alpha {
        obj.insert("alpha".into(), rational(a.alpha()));
    }
    obj.insert("n".into(), json!(m.n()));
    obj.insert("responses".into(), json!(m.responses()));
    obj.insert("rows".into(), rational_rows(m.rows()));
    Value::Object(obj)
}

/// Parses a mechanism and its optional privacy level.
pub fn mechanism_from_value(v: &Value) -> Result<(Mechanism, Option<PrivacyLevel>)> {
    let alpha = match v.get("alpha") {
        Some(a) => Some(
            PrivacyLevel::new(parse_rational_value(a, "alpha")?).map_err(|e| field_error("alpha", e.to_string()))?,
        ),
        None => None,
    };
    let n = parse_usize(get(v, "n")?, "n")?;
    let rows = parse_matrix(get(v, "rows")?, "rows")?;
    let responses = match v.get("responses") {
        Some(r) => parse_labels(r, "responses")?,
        None => (0..rows.first().map_or(0, Vec::len) as i64).collect(),
    };
    Ok((Mechanism::new(n, responses, rows)?, alpha))
}

pub fn loss_to_value(loss: &LossFunction) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), json!(loss.kind().name()));
    match loss.kind() {
        LossKind::Power { exponent } => {
            obj.insert("exponent".into(), rational(exponent));
            obj.insert("precision".into(), json!(loss.digits()));
        }
        LossKind::Tabulated(table) => {
            obj.insert("table".into(), rational_rows(table));
        }
        _ => {}
    }
    Value::Object(obj)
}

/// Parses a loss; `default_digits` applies when no `precision` is given.
pub fn loss_from_value(v: &Value, default_digits: u32) -> Result<LossFunction> {
    let kind = get(v, "kind")?.as_str().ok_or_else(|| field_error("loss.kind", "expected a string"))?;
    let kind = match kind {
        "absolute" => LossKind::Absolute,
        "squared" => LossKind::Squared,
        "binary" => LossKind::Binary,
        "power" => LossKind::Power { exponent: parse_rational_value(get(v, "exponent")?, "loss.exponent")? },
        "tabulated" => LossKind::Tabulated(parse_matrix(get(v, "table")?, "loss.table")?),
        other => return Err(field_error("loss.kind", format!("unknown loss kind {other:?}"))),
    };
    let digits = match v.get("precision") {
        Some(p) => {
            u32::try_from(parse_usize(p, "loss.precision")?).map_err(|_| field_error("loss.precision", "too large"))?
        }
        None => default_digits,
    };
    LossFunction::with_digits(kind, digits).map_err(|e| field_error("loss", e.to_string()))
}

pub fn user_to_value(u: &UserModel) -> Value {
    json!({
        "prior": u.prior().iter().map(rational).collect::<Vec<_>>(),
        "loss": loss_to_value(u.loss()),
    })
}

pub fn user_from_value(v: &Value, default_digits: u32) -> Result<UserModel> {
    let prior = parse_vector(get(v, "prior")?, "prior")?;
    let loss = loss_from_value(get(v, "loss")?, default_digits)?;
    UserModel::new(prior, loss).map_err(|e| field_error("prior", e.to_string()))
}

pub fn remap_to_value(y: &Remap) -> Value {
    json!({
        "deterministic": y.is_deterministic(),
        "sources": y.sources(),
        "targets": y.targets(),
        "rows": rational_rows(y.rows()),
    })
}

pub fn remap_from_value(v: &Value) -> Result<Remap> {
    let sources = parse_labels(get(v, "sources")?, "sources")?;
    let targets = parse_labels(get(v, "targets")?, "targets")?;
    let rows = parse_matrix(get(v, "rows")?, "rows")?;
    Remap::new(sources, targets, rows)
}

pub fn space_to_value(s: &DatabaseSpace) -> Value {
    json!({ "domain": s.domain(), "rows": s.rows(), "predicate": s.predicate() })
}

pub fn space_from_value(v: &Value) -> Result<DatabaseSpace> {
    let domain = parse_usize(get(v, "domain")?, "domain")?;
    let rows = parse_usize(get(v, "rows")?, "rows")?;
    let predicate = get(v, "predicate")?
        .as_array()
        .ok_or_else(|| field_error("predicate", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(k, x)| parse_usize(x, &format!("predicate[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    DatabaseSpace::new(domain, rows, predicate)
}

pub fn full_mechanism_to_value(x: &FullMechanism, alpha: Option<&PrivacyLevel>) -> Value {
    let mut obj = Map::new();
    if let Some(a) = alpha {
        obj.insert("alpha".into(), rational(a.alpha()));
    }
    obj.insert("responses".into(), json!(x.responses()));
    obj.insert("rows".into(), rational_rows(x.rows()));
    Value::Object(obj)
}

pub fn full_mechanism_from_value(v: &Value, space: &DatabaseSpace) -> Result<(FullMechanism, Option<PrivacyLevel>)> {
    let alpha = match v.get("alpha") {
        Some(a) => Some(
            PrivacyLevel::new(parse_rational_value(a, "alpha")?).map_err(|e| field_error("alpha", e.to_string()))?,
        ),
        None => None,
    };
    let rows = parse_matrix(get(v, "rows")?, "rows")?;
    let responses = parse_labels(get(v, "responses")?, "responses")?;
    Ok((FullMechanism::new(space, responses, rows)?, alpha))
}

pub fn constraint_matrix_to_value(c: &ConstraintMatrix) -> Value {
    Value::Array(c.grid().iter().map(|row| Value::String(row.iter().map(|s| s.as_char()).collect())).collect())
}

pub fn structure_to_value(r: &StructureReport) -> Value {
    let properties: Map<String, Value> = r
        .outcomes
        .iter()
        .map(|o| {
            let witness = o.witness.map_or(Value::Null, |w| json!({ "row": w.row, "column": w.column }));
            (o.property.name().to_string(), json!({ "passed": o.passed(), "witness": witness }))
        })
        .collect();
    json!({ "s": r.s, "z": r.z, "all_pass": r.all_pass(), "properties": properties })
}

fn tight_label(t: &Tight) -> String {
    match t {
        Tight::Row(RowKind::Down { i, r }) => format!("down({i},{r})"),
        Tight::Row(RowKind::Up { i, r }) => format!("up({i},{r})"),
        Tight::Row(RowKind::RowSum { i }) => format!("sum({i})"),
        Tight::NonNegative { i, r } => format!("nonneg({i},{r})"),
    }
}

fn check_to_value(c: &OptimalityCheck) -> Value {
    json!({
        "digits": c.digits,
        "min_reduced_cost": decimal(&c.min_reduced_cost),
        "near_zero": c.near_zero,
        "certified": c.certified,
    })
}

/// Objective and tight-set summary of an LP vertex.
pub fn vertex_report(sol: &VertexSolution, alpha: &PrivacyLevel, n: usize, rank: Option<usize>) -> Value {
    let down = sol.tight.iter().filter(|t| matches!(t, Tight::Row(RowKind::Down { .. }))).count();
    let up = sol.tight.iter().filter(|t| matches!(t, Tight::Row(RowKind::Up { .. }))).count();
    let nonneg = sol.tight.iter().filter(|t| matches!(t, Tight::NonNegative { .. })).count();
    json!({
        "alpha": rational(alpha.alpha()),
        "n": n,
        "objective": rational(&sol.objective),
        "objective_decimal": decimal(&sol.objective),
        "tight": {
            "count": sol.tight.len(),
            "down": down,
            "up": up,
            "nonnegative": nonneg,
            "rank": rank,
            "required_rank": (n + 1) * (n + 1),
            "constraints": sol.tight.iter().map(tight_label).collect::<Vec<_>>(),
        },
        "alternative_optima": sol.alternative_optima,
        "pivots": sol.pivots,
        "optimality_check": sol.check.as_ref().map_or(Value::Null, check_to_value),
    })
}

pub fn factorization_to_value(r: &FactorizationRecord) -> Value {
    json!({
        "n": r.n,
        "alpha": rational(r.alpha.alpha()),
        "user": user_to_value(&r.user),
        "remap_loss": rational(&r.remap_loss),
        "lp_loss": rational(&r.lp_loss),
        "remap_loss_decimal": decimal(&r.remap_loss),
        "lp_loss_decimal": decimal(&r.lp_loss),
        "difference": decimal(&r.difference),
        "losses_agree": r.losses_agree,
        "structure": structure_to_value(&r.structure),
        "reconstructs": r.reconstructs,
        "certified": r.certified,
        "alternative_optima": r.alternative_optima,
        "passed": r.passed(),
    })
}

pub fn remap_record_to_value(r: &RemapRecord) -> Value {
    json!({
        "n": r.n,
        "mechanism": mechanism_to_value(&r.mechanism, None),
        "user": user_to_value(&r.user),
        "bayes_loss": rational(&r.bayes_loss),
        "brute_force_loss": rational(&r.brute_force_loss),
        "passed": r.passed,
    })
}

pub fn uniqueness_to_value(v: &UniquenessVerdict) -> Value {
    json!({
        "remap": remap_to_value(&v.remap),
        "induces_geometric": v.induces_geometric,
        "is_permutation": v.is_permutation,
        "equivalent": v.equivalent(),
    })
}

pub fn obliviation_to_value(r: &ObliviationRecord) -> Value {
    json!({
        "rows": r.rows,
        "alpha": rational(r.alpha.alpha()),
        "input_private": r.input_private,
        "output_private": r.output_private,
        "original_loss": rational(&r.original_loss),
        "averaged_loss": rational(&r.averaged_loss),
        "oracle_agrees": r.oracle_agrees,
        "passed": r.passed(),
    })
}

pub fn counterexample_to_value(c: &Counterexample) -> Value {
    json!({
        "infeasible": true,
        "certificate_verifies": c.verifies(),
        "rows": c.program.constraints().len(),
        "variables": c.program.num_vars(),
        "multipliers": c.support().into_iter().map(|(label, z)| json!({ "row": label, "multiplier": rational(&z) })).collect::<Vec<_>>(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values always serialize");
    s.push('\n');
    s
}

pub fn parse(text: &str) -> Result<Value> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{half, reference_user, reference_vertex};
    use crate::ratio as q;

    #[test]
    fn mechanism_round_trip() {
        let m = reference_vertex();
        let v = mechanism_to_value(&m, Some(&half()));
        assert_eq!(v["rows"][0][2], json!("1/4"));
        assert_eq!(v["alpha"], json!("1/2"));
        let text = to_pretty(&v);
        let (back, alpha) = mechanism_from_value(&parse(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(alpha, Some(half()));
        assert_eq!(to_pretty(&mechanism_to_value(&back, alpha.as_ref())), text);
    }

    #[test]
    fn user_round_trip_and_decimal_exponent() {
        let u = reference_user();
        let v = user_to_value(&u);
        assert_eq!(user_from_value(&v, 64).unwrap(), u);
        let text = r#"{"prior": ["1/4","0","1/4","0","1/4","1/4"], "loss": {"kind":"power","exponent":"1.5"}}"#;
        assert_eq!(user_from_value(&parse(text).unwrap(), 64).unwrap(), u);
    }

    #[test]
    fn bad_field_is_named() {
        let text = r#"{"n": 1, "responses": [0,1], "rows": [["1/2","x"],["1/2","1/2"]]}"#;
        match mechanism_from_value(&parse(text).unwrap()) {
            Err(Error::Field { field, .. }) => assert_eq!(field, "rows[0][1]"),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"prior": ["1/2","1/2"], "loss": {"kind":"cubic"}}"#;
        assert!(matches!(user_from_value(&parse(text).unwrap(), 64), Err(Error::Field { .. })));
    }

    #[test]
    fn remap_round_trip() {
        let y = Remap::from_fn((0..=5).collect(), (0..=5).collect(), |r| if r == 1 { 2 } else { r }).unwrap();
        assert_eq!(remap_from_value(&remap_to_value(&y)).unwrap(), y);
    }

    #[test]
    fn tabulated_loss_round_trip() {
        let table = vec![vec![q(0, 1), q(1, 2)], vec![q(1, 3), q(0, 1)]];
        let loss = LossFunction::new(LossKind::Tabulated(table)).unwrap();
        assert_eq!(loss_from_value(&loss_to_value(&loss), 64).unwrap(), loss);
    }

    #[test]
    fn space_round_trip() {
        let s = DatabaseSpace::binary(3).unwrap();
        assert_eq!(space_from_value(&space_to_value(&s)).unwrap(), s);
    }
}

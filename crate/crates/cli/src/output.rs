//! Deterministic JSON rendering: 12 significant digits, no negative zero,
//! keys in sorted order.

use riskchain::{Claim, RiskSet, ScenarioModel, Stage, Verdict, Witness};
use serde_json::{json, Value};

pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    let r = if r == 0.0 { 0.0 } else { r };
    json!(r)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn claim(c: &Claim) -> Value {
    nums(c.values())
}

/// Atom labels and values of a stage-measurable claim.
pub fn atoms(model: &ScenarioModel, stage: Stage, c: &Claim) -> Value {
    let values = model.atom_values(c, stage);
    Value::Array(
        values
            .iter()
            .enumerate()
            .map(|(a, &v)| json!({ "atom": model.atom_label(stage, a), "value": num(v) }))
            .collect(),
    )
}

pub fn vertices(rs: &RiskSet) -> Value {
    let mut v: Vec<Vec<f64>> = rs.vertices().iter().map(|m| m.weights().to_vec()).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Value::Array(v.iter().map(|w| nums(w)).collect())
}

pub fn witness(w: &Option<Witness>) -> Value {
    match w {
        Some(w) => json!({
            "claim": claim(&w.claim),
            "stage": w.stage.to_string(),
            "gap": num(w.gap),
        }),
        None => Value::Null,
    }
}

pub fn verdict(v: &Verdict) -> Value {
    json!({
        "pass": v.pass,
        "stages": v.stages.map(|(s, t)| json!([s.to_string(), t.to_string()])),
        "witness": witness(&v.witness),
        "reason": v.reason,
    })
}

pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

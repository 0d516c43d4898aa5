use std::sync::Arc;

use riskchain::{
    consistency_report, is_mstable, lift_intermediate, mstable_hull, psi_build, reserve_plan, rho,
    split_reserve, two_by_two, verify_psi, Chain, Claim, RiskSet, ScenarioModel,
};
use serde_json::{json, Value};

use crate::document::Document;
use crate::error::CliError;
use crate::output::{self, num};

/// The set every single-set command works on.
pub const MAIN_SET: &str = "Q";

/// What a command produced: the report and whether it counts as success.
pub struct Outcome {
    pub report: Value,
    pub failure: Option<CliError>,
}

impl From<Value> for Outcome {
    fn from(report: Value) -> Self {
        Outcome {
            report,
            failure: None,
        }
    }
}

pub struct Loaded {
    pub doc: Document,
    pub model: Arc<ScenarioModel>,
    pub set: RiskSet,
}

impl Loaded {
    pub fn new(doc: Document, eps: Option<f64>) -> Result<Self, CliError> {
        let tol = doc.tolerances(eps)?;
        let model = doc.model(tol)?;
        let set = doc.set(MAIN_SET, &model)?;
        Ok(Loaded { doc, model, set })
    }

    fn claim(&self, name: Option<&str>) -> Result<(String, Claim), CliError> {
        let name = name.ok_or_else(|| CliError::schema("--claim is required"))?;
        Ok((name.to_string(), self.doc.claim(name, self.model.n())?))
    }
}

pub fn price(l: &Loaded, claim: Option<&str>, stage: Option<&str>) -> Result<Outcome, CliError> {
    let (name, x) = l.claim(claim)?;
    let label = stage.ok_or_else(|| CliError::schema("--stage is required"))?;
    let stage = l
        .model
        .stage_named(label)
        .map_err(|_| CliError::schema(format!("stage {label:?} is not on the grid")))?;
    let r = rho(&l.set, &x, stage).map_err(CliError::eval)?;
    Ok(json!({
        "command": "price",
        "claim": name,
        "stage": stage.to_string(),
        "atoms": output::atoms(&l.model, stage, &r),
    })
    .into())
}

pub fn check(l: &Loaded) -> Result<Outcome, CliError> {
    let sample = l.doc.all_claims(l.model.n())?;
    let r = consistency_report(&l.set, &sample).map_err(CliError::eval)?;
    let s = &r.strong;
    Ok(json!({
        "command": "check",
        "lower": output::verdict(&r.lower),
        "weak": output::verdict(&r.weak),
        "strong": {
            "pass": s.pass,
            "analytic": s.analytic,
            "sampled": s.sampled,
            "gap": num(s.gap),
            "witness": output::witness(&s.witness),
            "note": s.note,
        },
        "mstable": r.mstable,
    })
    .into())
}

pub fn hull(l: &Loaded) -> Result<Outcome, CliError> {
    let h = mstable_hull(&l.set).map_err(CliError::eval)?;
    let already = h.set_equal(&l.set).map_err(CliError::eval)?;
    Ok(json!({
        "command": "hull",
        "input_vertices": l.set.vertices().len(),
        "input_mstable": already,
        "vertex_count": h.vertices().len(),
        "vertices": output::vertices(&h),
    })
    .into())
}

pub fn split(l: &Loaded, claim: Option<&str>) -> Result<Outcome, CliError> {
    let (name, x) = l.claim(claim)?;
    let mm = l.doc.market(&l.model)?;
    // sets are rebuilt on the refined grid when half-steps were inserted
    let set = if Arc::ptr_eq(mm.model(), &l.model) {
        l.set.clone()
    } else {
        l.doc.set(MAIN_SET, mm.model())?
    };
    let plan = split_reserve(&set, &mm, &x).map_err(CliError::eval)?;
    let periods: Vec<Value> = (0..mm.horizon())
        .map(|t| {
            json!({
                "time": t,
                "financial": output::claim(&plan.financial[t]),
                "intermediate": output::claim(&plan.intermediate[t]),
            })
        })
        .collect();
    Ok(json!({
        "command": "split",
        "claim": name,
        "grid": mm.model().grid().iter().map(|g| g.to_string()).collect::<Vec<_>>(),
        "premium": num(plan.premium),
        "periods": periods,
        "validated": plan.validated,
        "time_consistent": plan.time_consistent,
        "telescoping_error": num(plan.telescoping_error(&x)),
        "warning": plan.warning,
    })
    .into())
}

pub fn reserve(l: &Loaded, claim: Option<&str>) -> Result<Outcome, CliError> {
    let (name, x) = l.claim(claim)?;
    let plan = reserve_plan(&Chain::single(l.set.clone()), &x).map_err(CliError::eval)?;
    let increments: Vec<Value> = plan
        .increments
        .iter()
        .map(|(s, u)| json!({ "stage": s.to_string(), "increment": output::claim(u) }))
        .collect();
    Ok(json!({
        "command": "reserve",
        "claim": name,
        "premium": num(plan.premium),
        "increments": increments,
        "time_consistent": plan.time_consistent,
        "telescoping_error": num(plan.telescoping_error(&x)),
        "warning": plan.warning,
    })
    .into())
}

pub fn psi(doc: &Document, eps: Option<f64>) -> Result<Outcome, CliError> {
    let tol = doc.tolerances(eps)?;
    let pm = doc.product(tol)?;
    let factors = doc.factors()?;
    let pi = factors
        .financial
        .sets
        .get("Pi")
        .ok_or_else(|| CliError::schema("factors.financial.sets lacks \"Pi\""))?
        .build(&pm.fin)?;
    let phi = match (doc.sets.get("Phi"), factors.intermediate.sets.get("Phi")) {
        (Some(s), _) => s.build(pm.model())?,
        (None, Some(s)) => {
            let p = s.build(&pm.inter)?;
            lift_intermediate(&pm, &p).map_err(CliError::eval)?
        }
        (None, None) => return Err(CliError::schema("no set named \"Phi\"")),
    };
    let q = psi_build(&pm, &pi, &phi).map_err(CliError::eval)?;
    let n = pm.model().n();
    let mut sample = doc.all_claims(n)?;
    if sample.is_empty() {
        sample.extend((0..n).map(|w| Claim::indicator(n, &[w])));
        let nf = pm.fin.n();
        sample.extend((0..nf).map(|f| pm.lift_financial(&Claim::indicator(nf, &[f]))));
    }
    let report = verify_psi(&pm, &pi, &phi, &q, &sample).map_err(CliError::eval)?;
    let pass = report.pass(tol.eps.max(1e-9));
    Ok(json!({
        "command": "psi",
        "outcomes": pm.model().outcomes(),
        "vertex_count": q.vertices().len(),
        "vertices": output::vertices(&q),
        "verification": {
            "qf_recovered": report.qf_recovered,
            "qi_recovered": report.qi_recovered,
            "mstable": report.mstable,
            "composition_gap": num(report.composition_gap),
            "pi_time_consistent": report.pi_time_consistent,
            "financial_gap": num(report.financial_gap),
            "financial_claims": report.financial_claims,
            "sample_size": sample.len(),
            "pass": pass,
        },
    })
    .into())
}

pub fn example6(eps: Option<f64>, tol: Option<f64>) -> Result<Outcome, CliError> {
    let eps = eps.unwrap_or(0.2);
    let tol = tol.unwrap_or(1e-9);
    let report = two_by_two::example_report(eps).map_err(CliError::eval)?;
    let q = two_by_two::pricing_set(eps).map_err(CliError::eval)?;
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "expected": num(c.expected),
                "computed": num(c.computed),
                "diff": num(c.diff()),
            })
        })
        .collect();
    let failures = report.checks.iter().filter(|c| c.diff() > tol).count();
    let mstable = is_mstable(&q).map_err(CliError::eval)?;
    let out = json!({
        "command": "example6",
        "epsilon": num(eps),
        "tolerance": num(tol),
        "vertices": output::vertices(&q),
        "mstable": mstable,
        "checks": checks,
        "max_diff": num(report.max_diff()),
        "failures": failures,
        "pass": failures == 0,
    });
    let failure = (failures > 0).then(|| {
        CliError::with_code(
            4,
            "EXAMPLE_DIFF",
            format!("{failures} checks differ by more than {tol:e}"),
        )
    });
    Ok(Outcome {
        report: out,
        failure,
    })
}

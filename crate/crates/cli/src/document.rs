//! The JSON market specification and its conversion into engine objects.

use std::collections::BTreeMap;
use std::sync::Arc;

use riskchain::{
    build_refined, product_space, Claim, Halfspace, MarketModel, Partition, ProductModel, RiskSet,
    ScenarioModel, StageLabel, Tolerances, MAX_INPUT_VERTICES,
};
use serde::Deserialize;

use crate::error::CliError;

pub const VERSION: u32 = 1;

type Atoms = Vec<Vec<usize>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub version: u32,
    pub outcomes: Option<Vec<String>>,
    pub grid: Option<Vec<String>>,
    pub partitions: Option<BTreeMap<String, Atoms>>,
    pub reference: Option<Vec<f64>>,
    pub financial_partitions: Option<BTreeMap<String, Atoms>>,
    #[serde(default)]
    pub sets: BTreeMap<String, SetDoc>,
    #[serde(default)]
    pub claims: BTreeMap<String, Vec<f64>>,
    pub tolerance: Option<ToleranceDoc>,
    pub factors: Option<Factors>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub outcomes: Vec<String>,
    pub grid: Vec<String>,
    pub partitions: BTreeMap<String, Atoms>,
    pub reference: Vec<f64>,
    #[serde(default)]
    pub sets: BTreeMap<String, SetDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factors {
    pub financial: ModelDoc,
    pub intermediate: ModelDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetDoc {
    pub vertices: Option<Vec<Vec<f64>>>,
    pub constraints: Option<Vec<ConstraintDoc>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    pub a: Vec<f64>,
    pub op: String,
    pub b: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceDoc {
    pub eps: Option<f64>,
    pub dedup: Option<f64>,
    pub zero: Option<f64>,
    pub max_assemblies: Option<usize>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: Document =
            serde_json::from_str(text).map_err(|e| CliError::schema(e.to_string()))?;
        if doc.version != VERSION {
            return Err(CliError::schema(format!(
                "unsupported version {}, expected {VERSION}",
                doc.version
            )));
        }
        Ok(doc)
    }

    pub fn tolerances(&self, eps: Option<f64>) -> Result<Tolerances, CliError> {
        let mut tol = Tolerances::default();
        if let Some(t) = &self.tolerance {
            tol.eps = t.eps.unwrap_or(tol.eps);
            tol.dedup = t.dedup.unwrap_or(tol.dedup);
            tol.zero = t.zero.unwrap_or(tol.zero);
            tol.max_assemblies = t.max_assemblies.unwrap_or(tol.max_assemblies);
        }
        if let Some(e) = eps {
            tol.eps = e;
        }
        for (name, v) in [("eps", tol.eps), ("dedup", tol.dedup), ("zero", tol.zero)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::schema(format!(
                    "tolerance {name} must be a nonnegative number"
                )));
            }
        }
        Ok(tol)
    }

    /// The scenario model given by the top-level fields.
    pub fn model(&self, tol: Tolerances) -> Result<Arc<ScenarioModel>, CliError> {
        let missing = |f: &str| CliError::schema(format!("missing field `{f}`"));
        build_model(
            self.outcomes.as_ref().ok_or_else(|| missing("outcomes"))?,
            self.grid.as_ref().ok_or_else(|| missing("grid"))?,
            self.partitions
                .as_ref()
                .ok_or_else(|| missing("partitions"))?,
            self.reference
                .as_ref()
                .ok_or_else(|| missing("reference"))?,
            tol,
        )
    }

    /// The market over the refined grid. Whole-time grids are refined with
    /// the financial partitions; grids with half-steps are taken as given.
    pub fn market(&self, model: &Arc<ScenarioModel>) -> Result<MarketModel, CliError> {
        let fin = self
            .financial_partitions
            .as_ref()
            .ok_or_else(|| CliError::schema("missing field `financial_partitions`"))?;
        let horizon = model.horizon();
        let mut parts = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let atoms = fin
                .get(&t.to_string())
                .ok_or_else(|| CliError::schema(format!("financial_partitions lacks time {t}")))?;
            parts.push(partition(model.n(), atoms)?);
        }
        for key in fin.keys() {
            match key.parse::<StageLabel>() {
                Ok(StageLabel::Time(t)) if t <= horizon => {}
                _ => {
                    return Err(CliError::schema(format!(
                        "financial_partitions key {key:?} is not a time of the grid"
                    )))
                }
            }
        }
        let mm = if model.has_half_steps() {
            MarketModel::new(model.clone(), parts)
        } else {
            build_refined(model, parts)
        };
        mm.map_err(CliError::model)
    }

    pub fn set(&self, name: &str, model: &Arc<ScenarioModel>) -> Result<RiskSet, CliError> {
        let doc = self
            .sets
            .get(name)
            .ok_or_else(|| CliError::schema(format!("no set named {name:?}")))?;
        doc.build(model)
    }

    pub fn claim(&self, name: &str, n: usize) -> Result<Claim, CliError> {
        let v = self
            .claims
            .get(name)
            .ok_or_else(|| CliError::schema(format!("no claim named {name:?}")))?;
        claim_vector(name, v, n)
    }

    /// Every claim of the document, in name order.
    pub fn all_claims(&self, n: usize) -> Result<Vec<Claim>, CliError> {
        self.claims
            .iter()
            .map(|(k, v)| claim_vector(k, v, n))
            .collect()
    }

    pub fn product(&self, tol: Tolerances) -> Result<ProductModel, CliError> {
        let f = self.factors()?;
        let fin = f.financial.model(tol)?;
        let inter = f.intermediate.model(tol)?;
        let pm = product_space(&fin, &inter).map_err(CliError::model)?;
        Ok(pm)
    }

    pub fn factors(&self) -> Result<&Factors, CliError> {
        self.factors
            .as_ref()
            .ok_or_else(|| CliError::schema("missing field `factors`"))
    }
}

impl ModelDoc {
    pub fn model(&self, tol: Tolerances) -> Result<Arc<ScenarioModel>, CliError> {
        build_model(
            &self.outcomes,
            &self.grid,
            &self.partitions,
            &self.reference,
            tol,
        )
    }
}

fn claim_vector(name: &str, v: &[f64], n: usize) -> Result<Claim, CliError> {
    if v.len() != n {
        return Err(CliError::schema(format!(
            "claim {name:?} has {} entries for {n} outcomes",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::schema(format!(
            "claim {name:?} has a non-finite entry"
        )));
    }
    Ok(Claim::new(v.to_vec()))
}

fn partition(n: usize, atoms: &Atoms) -> Result<Partition, CliError> {
    Partition::new(n, atoms.clone()).map_err(|msg| CliError::with_code(3, "BAD_PARTITION", msg))
}

fn build_model(
    outcomes: &[String],
    grid: &[String],
    partitions: &BTreeMap<String, Atoms>,
    reference: &[f64],
    tol: Tolerances,
) -> Result<Arc<ScenarioModel>, CliError> {
    let labels: Vec<StageLabel> = grid
        .iter()
        .map(|g| g.parse::<StageLabel>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::model(e.into()))?;
    let mut parts = Vec::with_capacity(grid.len());
    for (g, label) in grid.iter().zip(&labels) {
        let atoms = partitions
            .get(g)
            .or_else(|| partitions.get(&label.to_string()))
            .ok_or_else(|| CliError::schema(format!("no partition for stage {g:?}")))?;
        parts.push(atoms.clone());
    }
    for key in partitions.keys() {
        let known = key
            .parse::<StageLabel>()
            .map(|l| labels.contains(&l))
            .unwrap_or(false);
        if !known {
            return Err(CliError::schema(format!(
                "partition key {key:?} is not on the grid"
            )));
        }
    }
    let model = ScenarioModel::new(outcomes.to_vec(), labels, parts, reference.to_vec())
        .map_err(|e| CliError::model(e.into()))?
        .with_tolerances(tol);
    Ok(Arc::new(model))
}

impl SetDoc {
    pub fn build(&self, model: &Arc<ScenarioModel>) -> Result<RiskSet, CliError> {
        let from_v = match &self.vertices {
            Some(v) if v.len() > MAX_INPUT_VERTICES => {
                return Err(CliError::with_code(
                    5,
                    "TOO_LARGE",
                    format!(
                        "{} input vertices exceed the bound {MAX_INPUT_VERTICES}",
                        v.len()
                    ),
                ))
            }
            Some(v) => {
                Some(RiskSet::from_vertices(model.clone(), v.clone()).map_err(CliError::model)?)
            }
            None => None,
        };
        let from_h = match &self.constraints {
            Some(c) => {
                let h = c
                    .iter()
                    .map(|c| c.halfspace())
                    .collect::<Result<Vec<_>, _>>()?;
                Some(RiskSet::from_constraints(model.clone(), h).map_err(CliError::model)?)
            }
            None => None,
        };
        match (from_v, from_h) {
            (Some(v), Some(h)) => v.intersect(&h).map_err(CliError::model),
            (Some(s), None) | (None, Some(s)) => Ok(s),
            (None, None) => Err(CliError::schema("set needs `vertices` or `constraints`")),
        }
    }
}

impl ConstraintDoc {
    fn halfspace(&self) -> Result<Halfspace, CliError> {
        match self.op.as_str() {
            "<=" => Ok(Halfspace::new(self.a.clone(), self.b)),
            ">=" => Ok(Halfspace::new(self.a.iter().map(|x| -x).collect(), -self.b)),
            op => Err(CliError::schema(format!(
                "unknown constraint operator {op:?}"
            ))),
        }
    }
}

//! Conditional risk prices, chains, the dominating chain `η`, acceptance
//! cones and reserve plans.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpResult, Relation};
use crate::riskset::RiskSet;
use crate::scenario::{Claim, ScenarioModel, Stage};

/// `ρ_stage(X)` under `rs`, atom by atom; the identity at the last stage.
pub fn rho(rs: &RiskSet, claim: &Claim, stage: Stage) -> Result<Claim> {
    let model = rs.model();
    check_len(model, claim)?;
    if stage == model.terminal() {
        return Ok(claim.clone());
    }
    let values = (0..model.atoms(stage).len())
        .map(|b| rs.maximize_ratio(claim.values(), stage, b))
        .collect::<Result<Vec<f64>>>()?;
    Ok(model.lift(stage, &values))
}

fn check_len(model: &ScenarioModel, claim: &Claim) -> Result<()> {
    if claim.len() != model.n() {
        return Err(Error::Dimension {
            expected: model.n(),
            got: claim.len(),
        });
    }
    Ok(())
}

/// Evaluation dates with one test set per non-terminal date. The terminal
/// stage is always the last date and evaluates as the identity.
#[derive(Clone, Debug)]
pub struct Chain {
    stages: Vec<Stage>,
    sets: Vec<RiskSet>,
    single: bool,
}

impl Chain {
    /// `ρ^Q` over every stage of the grid.
    pub fn single(rs: RiskSet) -> Chain {
        let stages = rs.model().stages().collect::<Vec<_>>();
        let sets = vec![rs; stages.len() - 1];
        Chain {
            stages,
            sets,
            single: true,
        }
    }

    /// `ρ^Q` over a subset of the grid, starting at the root.
    pub fn single_on(rs: RiskSet, stages: Vec<Stage>) -> Result<Chain> {
        let stages = normalize_stages(rs.model(), stages)?;
        let sets = vec![rs; stages.len() - 1];
        Ok(Chain {
            stages,
            sets,
            single: true,
        })
    }

    /// A general chain with test set `sets[i]` at `stages[i]`.
    pub fn per_stage(stages: Vec<Stage>, sets: Vec<RiskSet>) -> Result<Chain> {
        let Some(first) = sets.first() else {
            return Err(Error::InvalidArgument(
                "a chain needs at least one set".into(),
            ));
        };
        let model = first.model().clone();
        if sets.iter().any(|s| **s.model() != *model) {
            return Err(Error::ModelMismatch);
        }
        let stages = normalize_stages(&model, stages)?;
        if sets.len() != stages.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} sets for {} non-terminal stages",
                sets.len(),
                stages.len() - 1
            )));
        }
        Ok(Chain {
            stages,
            sets,
            single: false,
        })
    }

    pub fn model(&self) -> &Arc<ScenarioModel> {
        self.sets[0].model()
    }

    /// Evaluation dates, ending with the terminal stage.
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Test set used at the `i`-th evaluation date.
    pub fn set(&self, i: usize) -> &RiskSet {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[RiskSet] {
        &self.sets
    }

    pub fn is_single(&self) -> bool {
        self.single
    }

    /// `ρ_{stages[i]}(X)` with the chain's own set at that date.
    pub fn rho_at(&self, i: usize, claim: &Claim) -> Result<Claim> {
        if i + 1 == self.stages.len() {
            return Ok(claim.clone());
        }
        rho(&self.sets[i], claim, self.stages[i])
    }
}

fn normalize_stages(model: &ScenarioModel, mut stages: Vec<Stage>) -> Result<Vec<Stage>> {
    if stages.first() != Some(&model.root()) {
        return Err(Error::InvalidArgument(
            "chain must start at the root stage".into(),
        ));
    }
    if stages.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("chain stages must increase".into()));
    }
    if let Some(s) = stages
        .iter()
        .find(|s| model.stage(s.index).ok() != Some(**s))
    {
        return Err(Error::InvalidArgument(format!(
            "stage {} is not in the grid",
            s.label
        )));
    }
    if *stages.last().unwrap() != model.terminal() {
        stages.push(model.terminal());
    }
    Ok(stages)
}

/// One claim per evaluation date.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedProcess {
    pub stages: Vec<Stage>,
    pub values: Vec<Claim>,
}

impl AdaptedProcess {
    pub fn at(&self, stage: Stage) -> Option<&Claim> {
        self.stages
            .iter()
            .position(|&s| s == stage)
            .map(|i| &self.values[i])
    }

    /// The value at the first date, which is constant.
    pub fn initial(&self) -> f64 {
        self.values[0][0]
    }
}

/// `η_T = X`, `η_t = ρ_t(η_{t+1})` along the chain's dates.
pub fn eta(chain: &Chain, claim: &Claim) -> Result<AdaptedProcess> {
    check_len(chain.model(), claim)?;
    let k = chain.stages.len();
    let mut values = vec![claim.clone(); k];
    for i in (0..k - 1).rev() {
        values[i] = chain.rho_at(i, &values[i + 1])?;
    }
    Ok(AdaptedProcess {
        stages: chain.stages.clone(),
        values,
    })
}

/// `ρ_0(X) <= eps`.
pub fn is_acceptable(rs: &RiskSet, claim: &Claim) -> Result<bool> {
    let eps = rs.model().tolerances().eps;
    Ok(rho(rs, claim, rs.model().root())?[0] <= eps)
}

/// Membership in `K_s = {X measurable at s_next : ρ_s(X) <= 0}`.
pub fn cone_member(rs: &RiskSet, claim: &Claim, s: Stage, s_next: Stage) -> Result<bool> {
    let model = rs.model();
    let eps = model.tolerances().eps;
    check_len(model, claim)?;
    if s >= s_next {
        return Err(Error::InvalidArgument("cone stages must increase".into()));
    }
    if !model.is_measurable_within(claim, s_next, eps) {
        return Err(Error::NotMeasurable {
            stage: s_next.label.to_string(),
        });
    }
    let r = rho(rs, claim, s)?;
    Ok(r.values().iter().all(|&v| v <= eps))
}

/// Outcome of the cone-sum feasibility program.
#[derive(Clone, Debug, PartialEq)]
pub enum Decomposition {
    /// Increments `y_t ∈ K_t`, tagged with `t`, summing to the claim.
    Feasible(Vec<(Stage, Claim)>),
    /// The minimal L1 violation of the program.
    Infeasible { residual: f64 },
}

impl Decomposition {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Decomposition::Feasible(_))
    }
}

/// Looks for `X = Σ_t y_t` with `y_t ∈ K_t` over the whole grid.
pub fn decompose_acceptance(rs: &RiskSet, claim: &Claim) -> Result<Decomposition> {
    let stages: Vec<Stage> = rs.model().stages().collect();
    decompose_acceptance_on(rs, &stages, claim)
}

/// As [`decompose_acceptance`], over the given dates (root first, terminal
/// last).
pub fn decompose_acceptance_on(
    rs: &RiskSet,
    stages: &[Stage],
    claim: &Claim,
) -> Result<Decomposition> {
    let model = rs.model();
    check_len(model, claim)?;
    let stages = normalize_stages(model, stages.to_vec())?;
    let levels = stages.len() - 1;
    // one free variable per atom of each level's target stage
    let mut offset = Vec::with_capacity(levels + 1);
    let mut nvars = 0;
    for l in 0..levels {
        offset.push(nvars);
        nvars += model.atoms(stages[l + 1]).len();
    }
    offset.push(nvars);
    let mut lp = LinearProgram::new(nvars);
    for j in 0..nvars {
        lp.set_free(j);
    }
    for w in 0..model.n() {
        let row: Vec<(usize, f64)> = (0..levels)
            .map(|l| (offset[l] + model.partition(stages[l + 1]).atom_of(w), 1.0))
            .collect();
        lp.add_sparse_row(&row, Relation::Eq, claim[w]);
    }
    for l in 0..levels {
        let (s, t) = (stages[l], stages[l + 1]);
        for b in 0..model.atoms(s).len() {
            let children = model.children(s, t, b);
            for k in rs.kernel_points(s, t, b)? {
                let row: Vec<(usize, f64)> = children
                    .iter()
                    .zip(&k)
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(&c, &p)| (offset[l] + c, p))
                    .collect();
                lp.add_sparse_row(&row, Relation::Le, 0.0);
            }
        }
    }
    let scale = claim.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = model.tolerances().eps * scale;
    match lp.solve(tol) {
        LpResult::Infeasible { residual } => Ok(Decomposition::Infeasible { residual }),
        LpResult::Optimal { x, .. } => {
            let parts = (0..levels)
                .map(|l| {
                    let vals = &x[offset[l]..offset[l + 1]];
                    (stages[l], model.lift(stages[l + 1], vals))
                })
                .collect();
            Ok(Decomposition::Feasible(parts))
        }
        LpResult::Unbounded => Err(Error::Internal("feasibility program unbounded".into())),
    }
}

/// Premium plus per-period increments telescoping to the claim.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservePlan {
    pub premium: f64,
    /// `(s, u_s)` with `u_s` measurable at the date after `s`.
    pub increments: Vec<(Stage, Claim)>,
    pub time_consistent: bool,
    pub warning: Option<String>,
}

impl ReservePlan {
    /// Largest pointwise deviation of `premium + Σ u_s` from `claim`.
    pub fn telescoping_error(&self, claim: &Claim) -> f64 {
        let mut total = Claim::constant(claim.len(), self.premium);
        for (_, u) in &self.increments {
            total = &total + u;
        }
        total.max_abs_diff(claim)
    }
}

/// `premium = η_0(X)`, `u_s = η_{s+1}(X) - η_s(X)`.
pub fn reserve_plan(chain: &Chain, claim: &Claim) -> Result<ReservePlan> {
    let e = eta(chain, claim)?;
    let increments = (0..e.stages.len() - 1)
        .map(|i| (e.stages[i], &e.values[i + 1] - &e.values[i]))
        .collect();
    let time_consistent = chain_time_consistent(chain, claim, &e)?;
    let warning = (!time_consistent).then(|| {
        "chain is not time-consistent; the plan uses the dominating chain eta".to_string()
    });
    Ok(ReservePlan {
        premium: e.initial(),
        increments,
        time_consistent,
        warning,
    })
}

fn chain_time_consistent(chain: &Chain, claim: &Claim, e: &AdaptedProcess) -> Result<bool> {
    if chain.is_single() {
        match crate::consistency::is_mstable_on(chain.set(0), chain.stages()) {
            Ok(v) => return Ok(v),
            Err(Error::TooLarge { .. }) => {}
            Err(err) => return Err(err),
        }
    }
    // fall back to the claim at hand: η must not exceed the chain's own prices
    let eps = chain.model().tolerances().eps;
    for i in 0..chain.stages().len() - 1 {
        let r = chain.rho_at(i, claim)?;
        if e.values[i].max_abs_diff(&r) > eps {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskset::Measure;
    use crate::scenario::StageLabel;

    fn six(eps: f64) -> RiskSet {
        let m = Arc::new(
            ScenarioModel::new(
                vec!["if".into(), "if'".into(), "i'f".into(), "i'f'".into()],
                ["0", "0+", "1"]
                    .iter()
                    .map(|l| l.parse::<StageLabel>().unwrap())
                    .collect(),
                vec![
                    vec![vec![0, 1, 2, 3]],
                    vec![vec![0, 2], vec![1, 3]],
                    (0..4).map(|w| vec![w]).collect(),
                ],
                vec![0.25; 4],
            )
            .unwrap(),
        );
        let q = |a: f64, b: f64| {
            vec![
                0.25 * (1.0 + a * eps),
                0.25 * (1.0 + b * eps),
                0.25 * (1.0 - a * eps),
                0.25 * (1.0 - b * eps),
            ]
        };
        RiskSet::from_vertices(
            m,
            vec![q(1.0, 1.0), q(1.0, -1.0), q(-1.0, 1.0), q(-1.0, -1.0)],
        )
        .unwrap()
    }

    fn x() -> Claim {
        Claim::new(vec![1.0, 0.0, -1.0, 0.0])
    }

    #[test]
    fn rho_closed_forms() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let half = m.stage_named("0+").unwrap();
        let r = rho(&rs, &Claim::new(vec![2.0, 0.0, 0.0, 0.0]), half).unwrap();
        assert!((r[0] - 1.2).abs() < 1e-12 && (r[2] - 1.2).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12);
        assert!((rho(&rs, &x(), m.root()).unwrap()[0] - 0.1).abs() < 1e-12);
        let c = rho(&rs, &Claim::constant(4, 7.0), half).unwrap();
        assert!(c.values().iter().all(|&v| (v - 7.0).abs() < 1e-12));
        assert_eq!(rho(&rs, &x(), m.terminal()).unwrap(), x());
    }

    #[test]
    fn eta_on_the_example() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let e = eta(&Chain::single(rs), &x()).unwrap();
        let half = m.stage_named("0+").unwrap();
        let h = e.at(half).unwrap();
        assert!((h[0] - 0.2).abs() < 1e-12 && h[1].abs() < 1e-12);
        assert!((e.initial() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn eta_of_a_singleton_is_the_conditional_expectation() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let q = Measure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let single = RiskSet::singleton(m.clone(), q.clone()).unwrap();
        let claim = Claim::new(vec![3.0, -1.0, 2.0, 5.0]);
        let e = eta(&Chain::single(single), &claim).unwrap();
        for (s, v) in e.stages.iter().zip(&e.values) {
            let c = crate::scenario::condexp(&q, &claim, *s, &m);
            assert!(v.max_abs_diff(&c) < 1e-12);
        }
    }

    #[test]
    fn acceptability() {
        let rs = six(0.2);
        assert!(!is_acceptable(&rs, &x()).unwrap());
        assert!(is_acceptable(&rs, &(&x() - &Claim::constant(4, 0.1))).unwrap());
        assert!(is_acceptable(&rs, &Claim::constant(4, 0.0)).unwrap());
        assert!(is_acceptable(&rs, &Claim::new(vec![-1.0, -2.0, 0.0, -0.5])).unwrap());
    }

    #[test]
    fn cones() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let half = m.stage_named("0+").unwrap();
        let t = m.terminal();
        assert!(cone_member(&rs, &Claim::constant(4, 0.0), half, t).unwrap());
        assert!(cone_member(&rs, &Claim::new(vec![0.8, 0.0, -1.2, 0.0]), half, t).unwrap());
        assert!(!cone_member(&rs, &Claim::new(vec![1.0, 0.0, 0.0, 0.0]), half, t).unwrap());
        assert!(matches!(
            cone_member(&rs, &x(), m.root(), half),
            Err(Error::NotMeasurable { .. })
        ));
    }

    #[test]
    fn decomposition_of_acceptable_claim() {
        let rs = six(0.2);
        let claim = &x() - &Claim::constant(4, 0.1);
        let Decomposition::Feasible(parts) = decompose_acceptance(&rs, &claim).unwrap() else {
            panic!("expected a decomposition");
        };
        let mut sum = Claim::constant(4, 0.0);
        for (s, y) in &parts {
            let next = rs.model().next(*s).unwrap();
            assert!(cone_member(&rs, y, *s, next).unwrap());
            sum = &sum + y;
        }
        assert!(sum.max_abs_diff(&claim) < 1e-9);

        let zero = decompose_acceptance(&rs, &Claim::constant(4, 0.0)).unwrap();
        assert!(zero.is_feasible());
        assert!(!decompose_acceptance(&rs, &x()).unwrap().is_feasible());
    }

    #[test]
    fn reserve_plans() {
        let rs = six(0.2);
        let plan = reserve_plan(&Chain::single(rs.clone()), &x()).unwrap();
        assert!((plan.premium - 0.1).abs() < 1e-12);
        assert!(plan.time_consistent && plan.warning.is_none());
        let u0 = &plan.increments[0].1;
        assert!((u0[0] - 0.1).abs() < 1e-12 && (u0[1] + 0.1).abs() < 1e-12);
        assert!(plan.telescoping_error(&x()) < 1e-12);

        let c = reserve_plan(&Chain::single(rs), &Claim::constant(4, 2.5)).unwrap();
        assert!((c.premium - 2.5).abs() < 1e-12);
        assert!(c
            .increments
            .iter()
            .all(|(_, u)| u.values().iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn chain_validation() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let half = m.stage_named("0+").unwrap();
        assert!(Chain::single_on(rs.clone(), vec![half]).is_err());
        let c = Chain::single_on(rs.clone(), vec![m.root(), half]).unwrap();
        assert_eq!(c.stages().len(), 3);
        assert!(Chain::per_stage(vec![m.root(), half], vec![rs]).is_err());
    }
}

//! Financial and intermediate parts of a market over the half-step refined
//! filtration `G_0, G_0+, G_1, …, G_T` with `G_t+ = G_t ∨ F_t+1`.

use std::sync::Arc;

use crate::consistency::is_mstable;
use crate::error::{Error, ModelError, Result};
use crate::pasting::{level_kernels, Plan};
use crate::risk::{cone_member, eta, rho, Chain};
use crate::riskset::RiskSet;
use crate::scenario::{Claim, Partition, ScenarioModel, Stage, StageLabel};
use crate::MAX_OUTCOMES;

/// A model on the refined grid together with its financial filtration.
#[derive(Clone, Debug)]
pub struct MarketModel {
    model: Arc<ScenarioModel>,
    financial: Vec<Partition>,
}

impl MarketModel {
    /// Wraps a model that already carries half-steps, checking
    /// `G_t+ = G_t ∨ F_t+1` and `F_t ⊂ G_t`.
    pub fn new(model: Arc<ScenarioModel>, financial: Vec<Partition>) -> Result<Self> {
        let horizon = model.horizon();
        check_financial(&model, &financial)?;
        for t in 0..horizon {
            let whole = model.stage_by_label(StageLabel::Time(t))?;
            let half = model
                .stage_by_label(StageLabel::Half(t))
                .map_err(|_| Error::InvalidArgument(format!("grid lacks the half-step {t}+")))?;
            let expected = model.partition(whole).common_refinement(&financial[t + 1]);
            if *model.partition(half) != expected {
                return Err(Error::InvalidArgument(format!(
                    "partition at {t}+ is not the join of G_{t} and F_{}",
                    t + 1
                )));
            }
        }
        Ok(MarketModel { model, financial })
    }

    pub fn model(&self) -> &Arc<ScenarioModel> {
        &self.model
    }

    pub fn financial(&self, t: usize) -> &Partition {
        &self.financial[t]
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    pub fn whole(&self, t: usize) -> Stage {
        self.model.stage_by_label(StageLabel::Time(t)).unwrap()
    }

    pub fn half(&self, t: usize) -> Stage {
        self.model.stage_by_label(StageLabel::Half(t)).unwrap()
    }
}

fn check_financial(model: &ScenarioModel, financial: &[Partition]) -> Result<()> {
    let horizon = model.horizon();
    if financial.len() != horizon + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} financial partitions for horizon {horizon}",
            financial.len()
        )));
    }
    for (t, f) in financial.iter().enumerate() {
        if f.n() != model.n() {
            return Err(Error::Dimension {
                expected: model.n(),
                got: f.n(),
            });
        }
        let g = model.partition(model.stage_by_label(StageLabel::Time(t))?);
        if !g.refines(f) || (t == 0 && f.len() != 1) {
            return Err(ModelError::NotCoarser { time: t }.into());
        }
    }
    Ok(())
}

/// Inserts the half-steps `G_t+ = G_t ∨ F_t+1` into a whole-time model.
pub fn build_refined(model: &ScenarioModel, financial: Vec<Partition>) -> Result<MarketModel> {
    if model.has_half_steps() {
        return Err(Error::InvalidArgument(
            "model already has half-steps".into(),
        ));
    }
    check_financial(model, &financial)?;
    let horizon = model.horizon();
    let mut grid = Vec::new();
    let mut parts = Vec::new();
    for t in 0..=horizon {
        let g = model
            .partition(model.stage_by_label(StageLabel::Time(t))?)
            .clone();
        if t < horizon {
            let half = g.common_refinement(&financial[t + 1]);
            grid.push(StageLabel::Time(t));
            parts.push(g);
            grid.push(StageLabel::Half(t));
            parts.push(half);
        } else {
            grid.push(StageLabel::Time(t));
            parts.push(g);
        }
    }
    let refined = ScenarioModel::from_partitions(
        model.outcomes().to_vec(),
        grid,
        parts,
        model.reference().to_vec(),
    )?
    .with_tolerances(*model.tolerances());
    MarketModel::new(Arc::new(refined), financial)
}

fn same_model(rs: &RiskSet, mm: &MarketModel) -> Result<()> {
    if Arc::ptr_eq(rs.model(), mm.model()) || **rs.model() == **mm.model() {
        Ok(())
    } else {
        Err(Error::ModelMismatch)
    }
}

/// Plan over the refined grid constraining the levels `keep` selects.
fn split_plan(rs: &RiskSet, keep: impl Fn(Stage, Stage) -> bool) -> Result<Plan> {
    let stages: Vec<Stage> = rs.model().stages().collect();
    let mut plan = Plan::free(stages.clone());
    for l in 0..stages.len() - 1 {
        if keep(stages[l], stages[l + 1]) {
            plan.levels[l] = Some(level_kernels(rs, stages[l], stages[l + 1])?);
        }
    }
    Ok(plan)
}

fn is_financial_level(s: Stage, _t: Stage) -> bool {
    !s.label.is_half()
}

fn is_intermediate_level(s: Stage, _t: Stage) -> bool {
    s.label.is_half()
}

/// `Q^F = ∩_t [Q]_{t,t+}`.
pub fn qf(rs: &RiskSet, mm: &MarketModel) -> Result<RiskSet> {
    same_model(rs, mm)?;
    split_plan(rs, is_financial_level)?.into_riskset(rs.model().clone(), "financial set")
}

/// `Q^I = ∩_t [Q]_{t+,t+1}`.
pub fn qi(rs: &RiskSet, mm: &MarketModel) -> Result<RiskSet> {
    same_model(rs, mm)?;
    split_plan(rs, is_intermediate_level)?.into_riskset(rs.model().clone(), "intermediate set")
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiReport {
    /// `is_mstable` on the refined grid.
    pub mstable: bool,
    /// `Q = Q^F ∩ Q^I`, with the intersection computed from half-spaces.
    pub equals_intersection: bool,
    pub qf_mstable: bool,
    pub qi_mstable: bool,
    /// `(Q^F)^I` is the whole simplex.
    pub qi_of_qf_full: bool,
    /// `(Q^I)^F` is the whole simplex.
    pub qf_of_qi_full: bool,
}

impl FiReport {
    /// The equivalence holds and the split sets behave as expected.
    pub fn pass(&self) -> bool {
        self.mstable == self.equals_intersection
            && self.qf_mstable
            && self.qi_mstable
            && self.qi_of_qf_full
            && self.qf_of_qi_full
    }
}

pub fn check_fi(rs: &RiskSet, mm: &MarketModel) -> Result<FiReport> {
    let f = qf(rs, mm)?;
    let i = qi(rs, mm)?;
    let both = f.intersect(&i)?;
    let full = RiskSet::simplex(rs.model().clone());
    Ok(FiReport {
        mstable: is_mstable(rs)?,
        equals_intersection: rs.set_equal(&both)?,
        qf_mstable: is_mstable(&f)?,
        qi_mstable: is_mstable(&i)?,
        qi_of_qf_full: qi(&f, mm)?.set_equal(&full)?,
        qf_of_qi_full: qf(&i, mm)?.set_equal(&full)?,
    })
}

/// Premium with financial increments `u^F_t` (measurable at `t+`) and
/// intermediate increments `u^I_t` (measurable at `t+1`).
#[derive(Clone, Debug, PartialEq)]
pub struct SplitReservePlan {
    pub premium: f64,
    pub financial: Vec<Claim>,
    pub intermediate: Vec<Claim>,
    /// Every increment passed its cone check.
    pub validated: bool,
    pub time_consistent: bool,
    pub warning: Option<String>,
}

impl SplitReservePlan {
    pub fn telescoping_error(&self, claim: &Claim) -> f64 {
        let mut total = Claim::constant(claim.len(), self.premium);
        for (f, i) in self.financial.iter().zip(&self.intermediate) {
            total = &(&total + f) + i;
        }
        total.max_abs_diff(claim)
    }
}

pub fn split_reserve(rs: &RiskSet, mm: &MarketModel, claim: &Claim) -> Result<SplitReservePlan> {
    same_model(rs, mm)?;
    let e = eta(&Chain::single(rs.clone()), claim)?;
    let at = |s: Stage| e.at(s).unwrap();
    let mut financial = Vec::new();
    let mut intermediate = Vec::new();
    let mut validated = true;
    for t in 0..mm.horizon() {
        let (w, h, n) = (mm.whole(t), mm.half(t), mm.whole(t + 1));
        let uf = at(h) - at(w);
        let ui = at(n) - at(h);
        validated &= cone_member(rs, &uf, w, h)? && cone_member(rs, &ui, h, n)?;
        financial.push(uf);
        intermediate.push(ui);
    }
    let time_consistent = match is_mstable(rs) {
        Ok(v) => v,
        Err(Error::TooLarge { .. }) => {
            let r = rho(rs, claim, rs.model().root())?;
            (e.initial() - r[0]).abs() <= rs.model().tolerances().eps
        }
        Err(err) => return Err(err),
    };
    Ok(SplitReservePlan {
        premium: e.initial(),
        financial,
        intermediate,
        validated,
        time_consistent,
        warning: (!time_consistent).then(|| {
            "set is not time-consistent on the refined grid; the plan uses eta".to_string()
        }),
    })
}

/// Product of a financial and an intermediate factor. Outcome `(i, f)` has
/// index `i * |Ω_F| + f`.
#[derive(Clone, Debug)]
pub struct ProductModel {
    pub fin: Arc<ScenarioModel>,
    pub inter: Arc<ScenarioModel>,
    pub market: MarketModel,
}

impl ProductModel {
    pub fn model(&self) -> &Arc<ScenarioModel> {
        self.market.model()
    }

    pub fn index(&self, inter: usize, fin: usize) -> usize {
        inter * self.fin.n() + fin
    }

    /// Whether the claim depends on the financial coordinate only.
    pub fn is_purely_financial(&self, claim: &Claim) -> bool {
        let nf = self.fin.n();
        (0..self.inter.n()).all(|i| (0..nf).all(|f| claim[self.index(i, f)] == claim[f]))
    }

    /// The financial payoff behind a purely financial claim.
    pub fn financial_part(&self, claim: &Claim) -> Claim {
        Claim::new((0..self.fin.n()).map(|f| claim[f]).collect())
    }

    /// `X(i, f) = Y(f)`.
    pub fn lift_financial(&self, y: &Claim) -> Claim {
        Claim::new((0..self.model().n()).map(|w| y[w % self.fin.n()]).collect())
    }
}

fn rectangles(fin: &Partition, inter: &Partition, nf: usize) -> Vec<Vec<usize>> {
    let mut atoms = Vec::new();
    for a in inter.atoms() {
        for b in fin.atoms() {
            let mut atom: Vec<usize> = a
                .iter()
                .flat_map(|&i| b.iter().map(move |&f| i * nf + f))
                .collect();
            atom.sort_unstable();
            atoms.push(atom);
        }
    }
    atoms
}

/// `Ω_F × Ω_I` with `G_t = F_t ⊗ I_t`, `G_t+ = F_t+1 ⊗ I_t`, `P = P_F ⊗ P_I`.
pub fn product_space(fin: &ScenarioModel, inter: &ScenarioModel) -> Result<ProductModel> {
    if fin.has_half_steps() || inter.has_half_steps() {
        return Err(Error::InvalidArgument(
            "factor models must use whole times".into(),
        ));
    }
    if fin.horizon() != inter.horizon() {
        return Err(Error::InvalidArgument(format!(
            "factor horizons differ: {} and {}",
            fin.horizon(),
            inter.horizon()
        )));
    }
    let (nf, ni) = (fin.n(), inter.n());
    if nf * ni > MAX_OUTCOMES {
        return Err(Error::TooLarge {
            what: "product space",
            size: nf * ni,
            bound: MAX_OUTCOMES,
        });
    }
    let n = nf * ni;
    let horizon = fin.horizon();
    let mut outcomes = Vec::with_capacity(n);
    let mut reference = Vec::with_capacity(n);
    for i in 0..ni {
        for f in 0..nf {
            outcomes.push(format!("{}{}", inter.outcomes()[i], fin.outcomes()[f]));
            reference.push(inter.reference()[i] * fin.reference()[f]);
        }
    }
    let whole = |m: &ScenarioModel, t: usize| -> Result<Partition> {
        Ok(m.partition(m.stage_by_label(StageLabel::Time(t))?).clone())
    };
    let mut grid = Vec::new();
    let mut parts = Vec::new();
    let mut financial = Vec::new();
    let trivial_inter = Partition::trivial(ni);
    for t in 0..=horizon {
        let (ft, it) = (whole(fin, t)?, whole(inter, t)?);
        grid.push(StageLabel::Time(t));
        parts.push(rectangles(&ft, &it, nf));
        financial
            .push(Partition::new(n, rectangles(&ft, &trivial_inter, nf)).map_err(Error::Internal)?);
        if t < horizon {
            grid.push(StageLabel::Half(t));
            parts.push(rectangles(&whole(fin, t + 1)?, &it, nf));
        }
    }
    let model =
        ScenarioModel::new(outcomes, grid, parts, reference)?.with_tolerances(*fin.tolerances());
    let market = MarketModel::new(Arc::new(model), financial)?;
    Ok(ProductModel {
        fin: Arc::new(fin.clone()),
        inter: Arc::new(inter.clone()),
        market,
    })
}

fn factor_check(rs: &RiskSet, factor: &ScenarioModel) -> Result<()> {
    if **rs.model() == *factor {
        Ok(())
    } else {
        Err(Error::ModelMismatch)
    }
}

/// `Π̂ = {Q ⊗ P_I : Q ∈ Π}`.
pub fn extend_pi(pm: &ProductModel, pi: &RiskSet) -> Result<RiskSet> {
    factor_check(pi, &pm.fin)?;
    let p_i = pm.inter.reference();
    let verts = pi
        .vertices()
        .iter()
        .map(|q| {
            (0..pm.model().n())
                .map(|w| q.weights()[w % pm.fin.n()] * p_i[w / pm.fin.n()])
                .collect()
        })
        .collect();
    RiskSet::from_vertices(pm.model().clone(), verts)
}

/// `{P_F ⊗ q : q ∈ set}` for a set on the intermediate factor.
pub fn lift_intermediate(pm: &ProductModel, set: &RiskSet) -> Result<RiskSet> {
    factor_check(set, &pm.inter)?;
    let p_f = pm.fin.reference();
    let nf = pm.fin.n();
    let verts = set
        .vertices()
        .iter()
        .map(|q| {
            (0..pm.model().n())
                .map(|w| p_f[w % nf] * q.weights()[w / nf])
                .collect()
        })
        .collect();
    RiskSet::from_vertices(pm.model().clone(), verts)
}

/// `Q = Π̂^F ∩ Φ^I`, pasted node by node.
pub fn psi_build(pm: &ProductModel, pi: &RiskSet, phi: &RiskSet) -> Result<RiskSet> {
    let hat = extend_pi(pm, pi)?;
    same_model(phi, &pm.market)?;
    let stages: Vec<Stage> = pm.model().stages().collect();
    let mut plan = Plan::free(stages.clone());
    for l in 0..stages.len() - 1 {
        let (s, t) = (stages[l], stages[l + 1]);
        let source = if s.label.is_half() { phi } else { &hat };
        plan.levels[l] = Some(level_kernels(source, s, t)?);
    }
    match plan.into_riskset(pm.model().clone(), "pricing class member") {
        Err(Error::EmptySet) => Err(Error::EmptyIntersection),
        r => r,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiReport {
    pub qf_recovered: bool,
    pub qi_recovered: bool,
    pub mstable: bool,
    /// Largest `|ρ_t(X) - ρ^Π̂_t(ρ^Φ_t+(ρ_t+1(X)))|` over the sample.
    pub composition_gap: f64,
    pub pi_time_consistent: bool,
    /// Largest `|ρ_t(X) - ρ^Π_t(X)|` over purely financial sampled claims.
    pub financial_gap: f64,
    pub financial_claims: usize,
}

impl PsiReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.qf_recovered
            && self.qi_recovered
            && self.mstable
            && self.composition_gap <= tol
            && (!self.pi_time_consistent || self.financial_gap <= tol)
    }
}

/// Checks the postconditions of [`psi_build`] for `q` on the sample.
pub fn verify_psi(
    pm: &ProductModel,
    pi: &RiskSet,
    phi: &RiskSet,
    q: &RiskSet,
    sample: &[Claim],
) -> Result<PsiReport> {
    let mm = &pm.market;
    let hat = extend_pi(pm, pi)?;
    let qf_recovered = qf(q, mm)?.set_equal(&qf(&hat, mm)?)?;
    let qi_recovered = qi(q, mm)?.set_equal(&qi(phi, mm)?)?;
    let mstable = is_mstable(q)?;
    let pi_time_consistent = is_mstable(pi)?;
    let mut composition_gap: f64 = 0.0;
    let mut financial_gap: f64 = 0.0;
    let mut financial_claims = 0;
    for x in sample {
        for t in 0..mm.horizon() {
            let (w, h, n) = (mm.whole(t), mm.half(t), mm.whole(t + 1));
            let lhs = rho(q, x, w)?;
            let inner = rho(q, x, n)?;
            let rhs = rho(&hat, &rho(phi, &inner, h)?, w)?;
            composition_gap = composition_gap.max(lhs.max_abs_diff(&rhs));
        }
        if pm.is_purely_financial(x) {
            financial_claims += 1;
            let y = pm.financial_part(x);
            for t in 0..=mm.horizon() {
                let lhs = rho(q, x, mm.whole(t))?;
                let fs = pm.fin.stage_by_label(StageLabel::Time(t))?;
                let rhs = pm.lift_financial(&rho(pi, &y, fs)?);
                financial_gap = financial_gap.max(lhs.max_abs_diff(&rhs));
            }
        }
    }
    Ok(PsiReport {
        qf_recovered,
        qi_recovered,
        mstable,
        composition_gap,
        pi_time_consistent,
        financial_gap,
        financial_claims,
    })
}

/// Two-stage pricing of a one-period contract.
#[derive(Clone, Debug, PartialEq)]
pub struct OnePeriodPremium {
    pub premium: f64,
    /// `H^F(f) = ρ^{p_I}(H(·, f))`, indexed by financial outcome.
    pub h_f: Vec<f64>,
    /// `H^F - premium`, as a claim on the product.
    pub u_f: Claim,
    /// `H - H^F`.
    pub u_i: Claim,
    pub u_f_acceptable: bool,
    pub u_i_acceptable: bool,
}

pub fn one_period_premium(
    pm: &ProductModel,
    p_f: &RiskSet,
    p_i: &RiskSet,
    h: &Claim,
) -> Result<OnePeriodPremium> {
    if pm.fin.horizon() != 1 {
        return Err(Error::InvalidArgument(
            "one-period product model required".into(),
        ));
    }
    factor_check(p_f, &pm.fin)?;
    factor_check(p_i, &pm.inter)?;
    if h.len() != pm.model().n() {
        return Err(Error::Dimension {
            expected: pm.model().n(),
            got: h.len(),
        });
    }
    let (nf, ni) = (pm.fin.n(), pm.inter.n());
    let eps = pm.model().tolerances().eps;
    let section = |f: usize, x: &Claim| Claim::new((0..ni).map(|i| x[pm.index(i, f)]).collect());
    let h_f = (0..nf)
        .map(|f| Ok(rho(p_i, &section(f, h), pm.inter.root())?[0]))
        .collect::<Result<Vec<f64>>>()?;
    let hf_claim = Claim::new(h_f.clone());
    let premium = rho(p_f, &hf_claim, pm.fin.root())?[0];
    let hf_lift = pm.lift_financial(&hf_claim);
    let u_f = &hf_lift - &Claim::constant(h.len(), premium);
    let u_i = h - &hf_lift;
    let u_f_acceptable = rho(p_f, &pm.financial_part(&u_f), pm.fin.root())?[0] <= eps;
    let mut u_i_acceptable = true;
    for f in 0..nf {
        u_i_acceptable &= rho(p_i, &section(f, &u_i), pm.inter.root())?[0] <= eps;
    }
    Ok(OnePeriodPremium {
        premium,
        h_f,
        u_f,
        u_i,
        u_f_acceptable,
        u_i_acceptable,
    })
}

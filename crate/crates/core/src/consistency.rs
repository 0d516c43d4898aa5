//! Projections, m-stable hulls and the time-consistency checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpResult, Relation};
use crate::pasting::{level_kernels, Plan};
use crate::risk::{eta, rho, Chain};
use crate::riskset::RiskSet;
use crate::scenario::{condexp, Claim, Stage};

/// `[Q]_{s,t}`: every measure whose `s -> t` kernels, at atoms it charges,
/// lie in the kernel polytopes of `rs`.
pub fn project(rs: &RiskSet, s: Stage, t: Stage) -> Result<RiskSet> {
    if s >= t {
        return Err(Error::InvalidArgument(format!(
            "projection needs s < t, got {} and {}",
            s.label, t.label
        )));
    }
    Plan::projection(rs, s, t)?.into_riskset(rs.model().clone(), "projection")
}

/// Smallest set containing `rs` that is stable under node-wise pasting
/// over the whole grid.
pub fn mstable_hull(rs: &RiskSet) -> Result<RiskSet> {
    let stages: Vec<Stage> = rs.model().stages().collect();
    mstable_hull_on(rs, &stages)
}

/// As [`mstable_hull`], pasting only at the given dates.
pub fn mstable_hull_on(rs: &RiskSet, stages: &[Stage]) -> Result<RiskSet> {
    let model = rs.model();
    let mut stages = stages.to_vec();
    if stages.first() != Some(&model.root()) {
        stages.insert(0, model.root());
    }
    if stages.last() != Some(&model.terminal()) {
        stages.push(model.terminal());
    }
    stages.dedup();
    let mut plan = Plan::free(stages.clone());
    for l in 0..stages.len() - 1 {
        plan.levels[l] = Some(level_kernels(rs, stages[l], stages[l + 1])?);
    }
    plan.into_riskset(model.clone(), "m-stable hull")
}

pub fn is_mstable(rs: &RiskSet) -> Result<bool> {
    rs.set_equal(&mstable_hull(rs)?)
}

pub(crate) fn is_mstable_on(rs: &RiskSet, stages: &[Stage]) -> Result<bool> {
    rs.set_equal(&mstable_hull_on(rs, stages)?)
}

/// A claim exhibiting a failure, with the stage where it shows.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub claim: Claim,
    pub stage: Stage,
    /// `η_0(X) - ρ_0(X)` for strong checks; the size of the violated
    /// inequality otherwise.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    /// The pair of dates at which the first failure was seen.
    pub stages: Option<(Stage, Stage)>,
    pub witness: Option<Witness>,
    pub reason: Option<String>,
}

impl Verdict {
    fn pass() -> Self {
        Verdict {
            pass: true,
            stages: None,
            witness: None,
            reason: None,
        }
    }

    fn fail(stages: (Stage, Stage), witness: Option<Witness>, reason: String) -> Self {
        Verdict {
            pass: false,
            stages: Some(stages),
            witness,
            reason: Some(reason),
        }
    }
}

/// `ρ_s(X) <= ρ_s(ρ_t(X))` on the sample and `Q^s ⊂ Q^{s'}` for adjacent
/// dates.
pub fn check_lower(chain: &Chain, sample: &[Claim]) -> Result<Verdict> {
    if chain.is_single() {
        return Ok(Verdict::pass());
    }
    let eps = chain.model().tolerances().eps;
    let st = chain.stages();
    let k = st.len();
    for x in sample {
        for i in 0..k - 1 {
            let ri = chain.rho_at(i, x)?;
            for j in i + 1..k {
                let comp = chain.rho_at(i, &chain.rho_at(j, x)?)?;
                let gap = (&ri - &comp).max();
                if gap > eps {
                    let w = Witness {
                        claim: x.clone(),
                        stage: st[i],
                        gap,
                    };
                    return Ok(Verdict::fail(
                        (st[i], st[j]),
                        Some(w),
                        "rho_s exceeds rho_s composed with rho_t".into(),
                    ));
                }
            }
        }
    }
    for i in 0..k.saturating_sub(2) {
        if !chain.set(i + 1).includes(chain.set(i))? {
            return Ok(Verdict::fail(
                (st[i], st[i + 1]),
                None,
                format!(
                    "the set at {} is not contained in the set at {}",
                    st[i].label,
                    st[i + 1].label
                ),
            ));
        }
    }
    Ok(Verdict::pass())
}

/// Every date's set generates the same conditional prices as the
/// projection of the first set.
pub fn check_weak(chain: &Chain) -> Result<Verdict> {
    let st = chain.stages();
    let terminal = *st.last().unwrap();
    let first = chain.set(0);
    for i in 1..st.len() - 1 {
        let target = project(first, st[i], terminal)?;
        let own = project(chain.set(i), st[i], terminal)?;
        if !own.set_equal(&target)? {
            return Ok(Verdict::fail(
                (st[0], st[i]),
                None,
                format!(
                    "the set at {} differs from the projection of the first set",
                    st[i].label
                ),
            ));
        }
    }
    Ok(Verdict::pass())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongVerdict {
    pub pass: bool,
    /// `is_mstable` on the set.
    pub analytic: bool,
    /// Whether the given sample stayed within tolerance.
    pub sampled: bool,
    /// `η_0(X) - ρ_0(X)` at the witness, or the largest gap at any date
    /// over the sample when the set passes.
    pub gap: f64,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

struct Gaps {
    /// `η_0(X) - ρ_0(X)`.
    root: f64,
    /// Largest `η_t(X) - ρ_t(X)` over dates and atoms.
    worst: f64,
    /// A claim concentrated on the worst atom, `1_B (X - ρ_t(X))`, whose
    /// root gap is positive whenever `worst` is.
    localized: Option<Claim>,
}

fn gaps(rs: &RiskSet, x: &Claim) -> Result<Gaps> {
    let chain = Chain::single(rs.clone());
    let e = eta(&chain, x)?;
    let model = rs.model();
    let mut root = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let mut localized = None;
    for (i, &s) in chain.stages().iter().enumerate() {
        let r = rho(rs, x, s)?;
        let d = &e.values[i] - &r;
        if i == 0 {
            root = d[0];
        }
        let (w, g) =
            d.values()
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (w, g)| if g > b.1 { (w, g) } else { b },
                );
        if g > worst {
            worst = g;
            localized = (i > 0).then(|| {
                let atom = &model.atoms(s)[model.partition(s).atom_of(w)];
                let mut v = vec![0.0; model.n()];
                for &o in atom {
                    v[o] = x[o] - r[o];
                }
                Claim::new(v)
            });
        }
    }
    Ok(Gaps {
        root,
        worst,
        localized,
    })
}

/// Root gap of `x`, trying its localized form when a later date shows more.
fn root_witness(rs: &RiskSet, x: Claim) -> Result<(Witness, f64)> {
    let g = gaps(rs, &x)?;
    let root = rs.model().root();
    let mut best = Witness {
        claim: x,
        stage: root,
        gap: g.root,
    };
    if let Some(loc) = g.localized.filter(|_| g.worst > g.root) {
        let lg = gaps(rs, &loc)?.root;
        if lg > best.gap {
            best = Witness {
                claim: loc,
                stage: root,
                gap: lg,
            };
        }
    }
    Ok((best, g.worst))
}

/// Best root witness over `claims`, with the largest gap seen at any date.
fn best_witness(
    rs: &RiskSet,
    claims: impl IntoIterator<Item = Claim>,
) -> Result<(Option<Witness>, f64)> {
    let mut best: Option<Witness> = None;
    let mut worst = 0.0f64;
    for x in claims {
        let (w, g) = root_witness(rs, x)?;
        worst = worst.max(g);
        if best.as_ref().map_or(true, |b| w.gap > b.gap) {
            best = Some(w);
        }
    }
    Ok((best, worst))
}

const WITNESS_GAP: f64 = 1e-6;
const RANDOM_WITNESSES: usize = 200;

/// Deterministic search for a claim with a visible `η - ρ` gap.
fn witness_search(rs: &RiskSet, hull: &RiskSet) -> Result<Option<Witness>> {
    let n = rs.model().n();
    let sign = |v: Vec<f64>| {
        Claim::new(
            v.into_iter()
                .map(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    };
    let outside: Vec<&[f64]> = hull
        .vertices()
        .iter()
        .filter(|h| !rs.member(h))
        .map(|h| h.weights())
        .collect();
    let mut overall: Option<Witness> = None;
    let mut keep = |found: (Option<Witness>, f64)| -> bool {
        if let Some(w) = found.0 {
            if overall.as_ref().map_or(true, |b| w.gap > b.gap) {
                overall = Some(w);
            }
        }
        overall.as_ref().is_some_and(|b| b.gap > WITNESS_GAP)
    };

    let indicators = (0..n).map(|w| Claim::indicator(n, &[w]));
    if keep(best_witness(rs, indicators)?) {
        return Ok(overall);
    }

    let mean: Vec<f64> = {
        let mut m = vec![0.0; n];
        for v in rs.vertices() {
            for (a, b) in m.iter_mut().zip(v.weights()) {
                *a += b / rs.vertices().len() as f64;
            }
        }
        m
    };
    let mut directions = Vec::new();
    for h in &outside {
        for v in rs
            .vertices()
            .iter()
            .map(|v| v.weights())
            .chain(std::iter::once(mean.as_slice()))
        {
            let d: Vec<f64> = h.iter().zip(v).map(|(a, b)| a - b).collect();
            let c = sign(d);
            directions.push(&c * -1.0);
            directions.push(c);
        }
    }
    if keep(best_witness(rs, directions)?) {
        return Ok(overall);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let random: Vec<Claim> = (0..RANDOM_WITNESSES)
        .map(|_| Claim::new((0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()))
        .collect();
    if keep(best_witness(rs, random)?) {
        return Ok(overall);
    }

    let separating = outside.iter().filter_map(|h| separating_claim(rs, h));
    keep(best_witness(rs, separating)?);
    Ok(overall)
}

/// `max h·X - z` subject to `v·X <= z` for every vertex and `|X| <= 1`.
fn separating_claim(rs: &RiskSet, h: &[f64]) -> Option<Claim> {
    let n = h.len();
    let mut lp = LinearProgram::new(n + 1);
    for j in 0..=n {
        lp.set_free(j);
    }
    for v in rs.vertices() {
        let mut row = v.weights().to_vec();
        row.push(-1.0);
        lp.add_row(row, Relation::Le, 0.0);
    }
    for j in 0..n {
        lp.add_sparse_row(&[(j, 1.0)], Relation::Le, 1.0);
        lp.add_sparse_row(&[(j, 1.0)], Relation::Ge, -1.0);
    }
    let mut c = h.to_vec();
    c.push(-1.0);
    lp.maximize(c);
    match lp.solve(1e-9) {
        LpResult::Optimal { x, value } if value > 0.0 => Some(Claim::new(x[..n].to_vec())),
        _ => None,
    }
}

/// `ρ_s = ρ_s ∘ ρ_t` for the single-set chain, checked through m-stability
/// and through the sample, with a witness search on failure.
pub fn check_strong(rs: &RiskSet, sample: &[Claim]) -> Result<StrongVerdict> {
    let eps = rs.model().tolerances().eps;
    let hull = mstable_hull(rs)?;
    let analytic = rs.set_equal(&hull)?;
    let (sampled_best, worst) = best_witness(rs, sample.iter().cloned())?;
    let sample_gap = worst.max(0.0);
    let sampled = sample_gap <= eps;
    if analytic && !sampled {
        return Err(Error::Internal(format!(
            "m-stable set shows a sampled gap of {sample_gap:e}"
        )));
    }
    if analytic {
        return Ok(StrongVerdict {
            pass: true,
            analytic,
            sampled,
            gap: sample_gap,
            witness: None,
            note: None,
        });
    }
    let mut witness = sampled_best.filter(|w| w.gap > eps);
    let mut note = None;
    if witness.as_ref().map_or(true, |w| w.gap <= WITNESS_GAP) {
        if sampled {
            note = Some("inconsistent, sample found no witness".to_string());
        }
        if let Some(found) = witness_search(rs, &hull)? {
            if witness.as_ref().map_or(true, |w| found.gap > w.gap) {
                witness = Some(found);
            }
        }
    }
    let gap = witness.as_ref().map_or(0.0, |w| w.gap);
    Ok(StrongVerdict {
        pass: false,
        analytic,
        sampled,
        gap,
        witness,
        note,
    })
}

/// `E_V(ρ_t(X) | G_s) <= ρ_s(X)` for every vertex and adjacent `s < t`,
/// on atoms the vertex charges.
pub fn check_supermartingale(rs: &RiskSet, claim: &Claim) -> Result<Verdict> {
    let model = rs.model();
    let tol = model.tolerances();
    let stages: Vec<Stage> = model.stages().collect();
    for w in stages.windows(2) {
        let (s, t) = (w[0], w[1]);
        let rs_s = rho(rs, claim, s)?;
        let rt = rho(rs, claim, t)?;
        for v in rs.vertices() {
            let ce = condexp(v, &rt, s, model);
            for (b, atom) in model.atoms(s).iter().enumerate() {
                if v.mass(atom) <= tol.zero {
                    continue;
                }
                let o = atom[0];
                let gap = ce[o] - rs_s[o];
                if gap > tol.eps {
                    return Ok(Verdict::fail(
                        (s, t),
                        Some(Witness {
                            claim: claim.clone(),
                            stage: s,
                            gap,
                        }),
                        format!(
                            "a vertex expects {} at atom {b} of stage {}, above the price {}",
                            ce[o], s.label, rs_s[o]
                        ),
                    ));
                }
            }
        }
    }
    Ok(Verdict::pass())
}

/// All checks for the single-set chain of `rs`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub lower: Verdict,
    pub weak: Verdict,
    pub strong: StrongVerdict,
    pub mstable: bool,
}

pub fn consistency_report(rs: &RiskSet, sample: &[Claim]) -> Result<ConsistencyReport> {
    let chain = Chain::single(rs.clone());
    let lower = check_lower(&chain, sample)?;
    let weak = check_weak(&chain)?;
    let strong = check_strong(rs, sample)?;
    Ok(ConsistencyReport {
        lower,
        weak,
        mstable: strong.analytic,
        strong,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskset::{Halfspace, Measure};
    use crate::scenario::{ScenarioModel, StageLabel};
    use std::sync::Arc;

    fn model(n: usize, grid: &[&str], parts: Vec<Vec<Vec<usize>>>) -> Arc<ScenarioModel> {
        Arc::new(
            ScenarioModel::new(
                (0..n).map(|w| format!("w{w}")).collect(),
                grid.iter()
                    .map(|l| l.parse::<StageLabel>().unwrap())
                    .collect(),
                parts,
                vec![1.0 / n as f64; n],
            )
            .unwrap(),
        )
    }

    fn six(eps: f64) -> RiskSet {
        let m = model(
            4,
            &["0", "0+", "1"],
            vec![
                vec![vec![0, 1, 2, 3]],
                vec![vec![0, 2], vec![1, 3]],
                (0..4).map(|w| vec![w]).collect(),
            ],
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

    fn crossed() -> RiskSet {
        let m = model(
            4,
            &["0", "1", "2"],
            vec![
                vec![vec![0, 1, 2, 3]],
                vec![vec![0, 1], vec![2, 3]],
                (0..4).map(|w| vec![w]).collect(),
            ],
        );
        RiskSet::from_vertices(m, vec![vec![0.4, 0.1, 0.4, 0.1], vec![0.1, 0.4, 0.1, 0.4]]).unwrap()
    }

    fn pinned_columns(m: &Arc<ScenarioModel>) -> RiskSet {
        RiskSet::from_constraints(
            m.clone(),
            vec![
                Halfspace::new(vec![1.0, 0.0, 1.0, 0.0], 0.5),
                Halfspace::new(vec![-1.0, 0.0, -1.0, 0.0], -0.5),
            ],
        )
        .unwrap()
    }

    fn band(m: &Arc<ScenarioModel>, delta: f64) -> RiskSet {
        // 1/δ <= q_{0j}/q_{1j} <= δ on each column, i.e. q(i,f) against q(i',f)
        let mut h = Vec::new();
        for (top, bottom) in [(0, 2), (1, 3)] {
            let mut a = vec![0.0; 4];
            a[top] = 1.0;
            a[bottom] = -delta;
            h.push(Halfspace::new(a, 0.0));
            let mut a = vec![0.0; 4];
            a[bottom] = 1.0;
            a[top] = -delta;
            h.push(Halfspace::new(a, 0.0));
        }
        RiskSet::from_constraints(m.clone(), h).unwrap()
    }

    #[test]
    fn singleton_projection_and_hull() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let q =
            RiskSet::singleton(m.clone(), Measure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap()).unwrap();
        let p = project(&q, m.root(), m.terminal()).unwrap();
        assert!(p.set_equal(&q).unwrap());
        assert!(mstable_hull(&q).unwrap().set_equal(&q).unwrap());
    }

    #[test]
    fn projections_of_the_example() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let half = m.stage_named("0+").unwrap();
        let f = project(&rs, m.root(), half).unwrap();
        assert!(f.set_equal(&pinned_columns(&m)).unwrap());
        let i = project(&rs, half, m.terminal()).unwrap();
        assert!(i.set_equal(&band(&m, 1.5)).unwrap());
        assert!(project(&rs, half, half).is_err());
    }

    #[test]
    fn hull_of_the_example_is_itself() {
        let rs = six(0.2);
        assert!(is_mstable(&rs).unwrap());
        let s = RiskSet::simplex(rs.model().clone());
        assert!(is_mstable(&s).unwrap());
    }

    #[test]
    fn crossed_set_is_not_mstable() {
        let rs = crossed();
        let hull = mstable_hull(&rs).unwrap();
        assert_eq!(hull.vertices().len(), 4);
        let cross = Measure::new(vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        assert!(hull.member(&cross));
        assert!(!rs.member(&cross));
        assert!(!is_mstable(&rs).unwrap());
        assert!(mstable_hull(&hull).unwrap().set_equal(&hull).unwrap());
    }

    #[test]
    fn strong_check_finds_a_witness() {
        let rs = crossed();
        let v = check_strong(&rs, &[]).unwrap();
        assert!(!v.pass && !v.analytic);
        let w = v.witness.unwrap();
        assert!(w.gap > 1e-6);
        assert!((gaps(&rs, &w.claim).unwrap().root - w.gap).abs() < 1e-12);

        let x = Claim::new(vec![1.0, -1.0, -1.0, 1.0]);
        assert!((gaps(&rs, &x).unwrap().root - 0.6).abs() < 1e-12);
        let y = Claim::new(vec![1.0, 0.0, 0.0, 1.0]);
        assert!((gaps(&rs, &y).unwrap().root - 0.3).abs() < 1e-12);

        let sup = check_supermartingale(&rs, &x).unwrap();
        assert!(!sup.pass);
    }

    #[test]
    fn strong_check_passes_on_the_example() {
        let rs = six(0.2);
        let sample = vec![
            Claim::new(vec![1.0, 0.0, -1.0, 0.0]),
            Claim::new(vec![0.3, -2.0, 1.0, 4.0]),
        ];
        let v = check_strong(&rs, &sample).unwrap();
        assert!(v.pass && v.analytic && v.sampled);
        assert!(check_supermartingale(&rs, &sample[0]).unwrap().pass);
        let report = consistency_report(&rs, &sample).unwrap();
        assert!(report.lower.pass && report.weak.pass && report.mstable);
    }

    #[test]
    fn lower_and_weak_checks() {
        let rs = six(0.2);
        let m = rs.model().clone();
        let half = m.stage_named("0+").unwrap();
        let stages = vec![m.root(), half];
        let sample = vec![Claim::new(vec![1.0, 0.0, -1.0, 0.0])];

        let derived = Chain::per_stage(
            stages.clone(),
            vec![rs.clone(), project(&rs, half, m.terminal()).unwrap()],
        )
        .unwrap();
        assert!(check_lower(&derived, &sample).unwrap().pass);
        assert!(check_weak(&derived).unwrap().pass);

        let reversed = Chain::per_stage(
            stages.clone(),
            vec![
                RiskSet::simplex(m.clone()),
                RiskSet::singleton(m.clone(), m.reference_measure()).unwrap(),
            ],
        )
        .unwrap();
        let v = check_lower(&reversed, &[]).unwrap();
        assert!(!v.pass && v.stages == Some((m.root(), half)));

        let full = project(&rs, half, m.terminal()).unwrap();
        let mut pts: Vec<Vec<f64>> = full
            .vertices()
            .iter()
            .map(|v| v.weights().to_vec())
            .collect();
        pts.pop();
        let shrunk = RiskSet::from_vertices(m.clone(), pts).unwrap();
        let weak = Chain::per_stage(stages, vec![rs, shrunk]).unwrap();
        let v = check_weak(&weak).unwrap();
        assert!(!v.pass && v.stages == Some((m.root(), half)));
    }
}

//! Convex polytopes of probability measures on a scenario model.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpResult, Relation};
use crate::polytope::{self, dedup_points};
use crate::scenario::{ScenarioModel, Stage};
use crate::MAX_OUTCOMES;

pub use crate::polytope::Halfspace;

/// Probability vector over outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    /// Rejects negative weights and sums off one by more than `1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {s}")));
        }
        Ok(Measure { weights })
    }

    /// Clips tiny negatives produced by arithmetic and rescales to unit sum.
    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Measure {
            weights: polytope::clean_probability(weights, 1e-15),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn mass(&self, outcomes: &[usize]) -> f64 {
        outcomes.iter().map(|&w| self.weights[w]).sum()
    }
}

/// One-step conditional distribution of a measure at a node: the mass it
/// sends from atom `source` of stage `from` to the atoms `targets` of stage
/// `to` contained in it.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub from: Stage,
    pub to: Stage,
    pub source: usize,
    pub targets: Vec<usize>,
    pub probs: Vec<f64>,
}

/// Density `Λ_t = E_P(dQ/dP | G_t)`, as a vector over outcomes.
pub fn density(measure: &Measure, stage: Stage, model: &ScenarioModel) -> Vec<f64> {
    let p = model.reference();
    let mut out = vec![0.0; model.n()];
    for atom in model.atoms(stage) {
        let ratio = measure.mass(atom) / atom.iter().map(|&w| p[w]).sum::<f64>();
        for &w in atom {
            out[w] = ratio;
        }
    }
    out
}

/// The kernel of `measure` from atom `atom` of stage `s` to stage `t`, with
/// the reference kernel on null atoms.
pub fn node_kernel(
    measure: &Measure,
    s: Stage,
    t: Stage,
    atom: usize,
    model: &ScenarioModel,
) -> Kernel {
    let targets = model.children(s, t, atom);
    let mass = measure.mass(&model.atoms(s)[atom]);
    let weights = if mass > model.tolerances().zero {
        measure.weights()
    } else {
        model.reference()
    };
    let probs = child_masses(weights, &targets, t, model);
    let total: f64 = probs.iter().sum();
    Kernel {
        from: s,
        to: t,
        source: atom,
        targets,
        probs: probs.into_iter().map(|m| m / total).collect(),
    }
}

fn child_masses(weights: &[f64], targets: &[usize], t: Stage, model: &ScenarioModel) -> Vec<f64> {
    targets
        .iter()
        .map(|&c| model.atoms(t)[c].iter().map(|&w| weights[w]).sum())
        .collect()
}

/// Phase-one residual of writing `q` as a convex combination of `points`.
pub(crate) fn hull_residual(points: &[&[f64]], q: &[f64]) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let m = points.len();
    let mut lp = LinearProgram::new(m);
    for j in 0..q.len() {
        let row: Vec<f64> = points.iter().map(|p| p[j]).collect();
        lp.add_row(row, Relation::Eq, q[j]);
    }
    lp.add_row(vec![1.0; m], Relation::Eq, 1.0);
    lp.min_infeasibility()
}

/// Drops points lying in the convex hull of the remaining ones.
pub(crate) fn prune_to_extreme(points: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    if points.len() <= 2 {
        return points;
    }
    let mut alive = vec![true; points.len()];
    for i in 0..points.len() {
        let others: Vec<&[f64]> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i && alive[j])
            .map(|(_, p)| p.as_slice())
            .collect();
        if hull_residual(&others, &points[i]) <= tol {
            alive[i] = false;
        }
    }
    points
        .into_iter()
        .zip(alive)
        .filter_map(|(p, a)| a.then_some(p))
        .collect()
}

/// Convex set of probability measures, stored as vertices and, on demand,
/// half-spaces relative to the simplex.
#[derive(Clone, Debug)]
pub struct RiskSet {
    model: Arc<ScenarioModel>,
    vertices: Vec<Measure>,
    constraints: OnceLock<Vec<Halfspace>>,
}

impl RiskSet {
    /// Convex hull of the given measures; duplicates and interior points
    /// are dropped.
    pub fn from_vertices(model: Arc<ScenarioModel>, vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptySet);
        }
        let n = model.n();
        for v in &vertices {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: v.len(),
                });
            }
            Measure::new(v.clone())?;
        }
        let tol = model.tolerances();
        let points = prune_to_extreme(dedup_points(vertices, tol.dedup), tol.eps);
        Ok(Self::from_extreme(model, points))
    }

    /// Vertices already known to be distinct extreme points.
    pub(crate) fn from_extreme(model: Arc<ScenarioModel>, points: Vec<Vec<f64>>) -> Self {
        RiskSet {
            model,
            vertices: points.into_iter().map(Measure::from_raw).collect(),
            constraints: OnceLock::new(),
        }
    }

    /// Both representations at once, trusted to agree.
    pub(crate) fn from_parts(
        model: Arc<ScenarioModel>,
        points: Vec<Vec<f64>>,
        constraints: Vec<Halfspace>,
    ) -> Self {
        let rs = Self::from_extreme(model, points);
        let _ = rs.constraints.set(constraints);
        rs
    }

    /// `{q in simplex : a·q <= b}`; the vertex list is enumerated at once.
    pub fn from_constraints(
        model: Arc<ScenarioModel>,
        constraints: Vec<Halfspace>,
    ) -> Result<Self> {
        let n = model.n();
        if n > MAX_OUTCOMES {
            return Err(Error::TooLarge {
                what: "vertex enumeration",
                size: n,
                bound: MAX_OUTCOMES,
            });
        }
        if let Some(h) = constraints.iter().find(|h| h.a.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: h.a.len(),
            });
        }
        let verts = polytope::enumerate_vertices(n, &constraints, model.tolerances().eps)?;
        if verts.is_empty() {
            return Err(Error::EmptySet);
        }
        let rs = Self::from_extreme(model, verts);
        let _ = rs.constraints.set(constraints);
        Ok(rs)
    }

    pub fn simplex(model: Arc<ScenarioModel>) -> Self {
        let n = model.n();
        let pts = (0..n)
            .map(|j| {
                let mut v = vec![0.0; n];
                v[j] = 1.0;
                v
            })
            .collect();
        let rs = Self::from_extreme(model, pts);
        let _ = rs.constraints.set(Vec::new());
        rs
    }

    pub fn singleton(model: Arc<ScenarioModel>, measure: Measure) -> Result<Self> {
        Self::from_vertices(model, vec![measure.weights().to_vec()])
    }

    pub fn model(&self) -> &Arc<ScenarioModel> {
        &self.model
    }

    pub fn vertices(&self) -> &[Measure] {
        &self.vertices
    }

    pub(crate) fn vertex_slices(&self) -> Vec<&[f64]> {
        self.vertices.iter().map(|v| v.weights()).collect()
    }

    /// Half-space form; computed from the vertices on first use.
    pub fn constraints(&self) -> Result<&[Halfspace]> {
        if let Some(c) = self.constraints.get() {
            return Ok(c);
        }
        let pts: Vec<Vec<f64>> = self.vertices.iter().map(|v| v.weights().to_vec()).collect();
        let facets = polytope::facets(&pts, self.model.tolerances().eps)?;
        Ok(self.constraints.get_or_init(|| facets))
    }

    /// Returns a set whose vertex list is the exact enumeration; vertices are
    /// always materialized, so this is a cheap copy.
    pub fn vertex_enumeration(&self) -> Result<RiskSet> {
        Ok(self.clone())
    }

    fn same_model(&self, other: &RiskSet) -> Result<()> {
        if Arc::ptr_eq(&self.model, &other.model) || *self.model == *other.model {
            Ok(())
        } else {
            Err(Error::ModelMismatch)
        }
    }

    pub fn member(&self, q: &Measure) -> bool {
        let tol = self.model.tolerances().eps;
        if let Some(c) = self.constraints.get() {
            return c.iter().all(|h| h.slack(q.weights()) >= -tol);
        }
        hull_residual(&self.vertex_slices(), q.weights()) <= tol
    }

    /// Whether every vertex of `other` lies in `self`.
    pub fn includes(&self, other: &RiskSet) -> Result<bool> {
        self.same_model(other)?;
        Ok(other.vertices.iter().all(|v| self.member(v)))
    }

    pub fn set_equal(&self, other: &RiskSet) -> Result<bool> {
        Ok(self.includes(other)? && other.includes(self)?)
    }

    pub fn intersect(&self, other: &RiskSet) -> Result<RiskSet> {
        self.same_model(other)?;
        let mut h = self.constraints()?.to_vec();
        h.extend_from_slice(other.constraints()?);
        match RiskSet::from_constraints(self.model.clone(), h) {
            Err(Error::EmptySet) => Err(Error::EmptyIntersection),
            r => r,
        }
    }

    /// Every outcome is charged by some vertex.
    pub fn is_relevant(&self) -> bool {
        let zero = self.model.tolerances().zero;
        (0..self.model.n()).all(|w| self.vertices.iter().any(|v| v.weights[w] > zero))
    }

    /// `sup { Σ_{ω∈B} Q(ω) a(ω) / Q(B) : Q(B) > 0 }` over the set, by vertex
    /// maximum.
    pub fn maximize_ratio(&self, a: &[f64], stage: Stage, atom: usize) -> Result<f64> {
        let outcomes = &self.model.atoms(stage)[atom];
        let zero = self.model.tolerances().zero;
        let mut best: Option<f64> = None;
        for v in &self.vertices {
            let w = v.weights();
            let mass: f64 = outcomes.iter().map(|&o| w[o]).sum();
            if mass > zero {
                let r = outcomes.iter().map(|&o| w[o] * a[o]).sum::<f64>() / mass;
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
        best.ok_or_else(|| Error::EmptyKernel {
            stage: stage.label.to_string(),
            atom,
        })
    }

    /// The same supremum computed from the half-space form by the
    /// homogenized program `max a·y, y = s q, Σ_B y = 1`.
    pub fn maximize_ratio_lp(&self, a: &[f64], stage: Stage, atom: usize) -> Result<f64> {
        let n = self.model.n();
        let outcomes = &self.model.atoms(stage)[atom];
        let h = self.constraints()?;
        let mut lp = LinearProgram::new(n + 1);
        for hs in h {
            let mut row = hs.a.clone();
            row.push(-hs.b);
            lp.add_row(row, Relation::Le, 0.0);
        }
        let mut sum = vec![1.0; n];
        sum.push(-1.0);
        lp.add_row(sum, Relation::Eq, 0.0);
        let mut on_b = vec![0.0; n + 1];
        let mut c = vec![0.0; n + 1];
        for &o in outcomes {
            on_b[o] = 1.0;
            c[o] = a[o];
        }
        lp.add_row(on_b, Relation::Eq, 1.0);
        lp.maximize(c);
        match lp.solve(self.model.tolerances().eps) {
            LpResult::Optimal { value, .. } => Ok(value),
            LpResult::Infeasible { .. } => Err(Error::EmptyKernel {
                stage: stage.label.to_string(),
                atom,
            }),
            LpResult::Unbounded => Err(Error::Internal("unbounded ratio program".into())),
        }
    }

    /// Vertices of `{ Q(·|B) : Q in the set, Q(B) > 0 }` over the stage-`t`
    /// atoms inside atom `atom` of stage `s`, as probability vectors over
    /// `model.children(s, t, atom)`.
    pub fn kernel_polytope(&self, s: Stage, t: Stage, atom: usize) -> Result<Vec<Kernel>> {
        let pts = self.kernel_points(s, t, atom)?;
        let targets = self.model.children(s, t, atom);
        Ok(pts
            .into_iter()
            .map(|probs| Kernel {
                from: s,
                to: t,
                source: atom,
                targets: targets.clone(),
                probs,
            })
            .collect())
    }

    pub(crate) fn kernel_points(&self, s: Stage, t: Stage, atom: usize) -> Result<Vec<Vec<f64>>> {
        let tol = self.model.tolerances();
        let outcomes = &self.model.atoms(s)[atom];
        let targets = self.model.children(s, t, atom);
        let mut pts = Vec::new();
        for v in &self.vertices {
            let mass = v.mass(outcomes);
            if mass > tol.zero {
                let probs = child_masses(v.weights(), &targets, t, &self.model);
                pts.push(probs.into_iter().map(|m| m / mass).collect::<Vec<f64>>());
            }
        }
        if pts.is_empty() {
            return Err(Error::EmptyKernel {
                stage: s.label.to_string(),
                atom,
            });
        }
        Ok(prune_to_extreme(dedup_points(pts, tol.dedup), tol.eps))
    }
}

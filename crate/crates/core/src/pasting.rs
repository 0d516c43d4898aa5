//! Node-by-node pasting of one-step kernels.
//!
//! A plan walks a chain of stages from the root to the terminal stage. At
//! every node of every level the one-step kernel is either constrained to a
//! kernel polytope (given by its vertices) or free. The pasted set is
//! `{R : for every constrained node B with R(B) > 0, R(·|B) ∈ K_B}`; its
//! extreme points are the products of kernel vertices along the tree, and
//! its facets are the homogenized facets of the node polytopes.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::polytope::{self, Halfspace};
use crate::riskset::RiskSet;
use crate::scenario::{ScenarioModel, Stage};

/// Kernel vertices for every atom of the source stage of one level.
pub(crate) type LevelKernels = Vec<Vec<Vec<f64>>>;

pub(crate) struct Plan {
    pub stages: Vec<Stage>,
    /// `levels[l]` governs `stages[l] -> stages[l + 1]`; `None` is free.
    pub levels: Vec<Option<LevelKernels>>,
}

/// Kernel polytope vertices of `rs` at every atom of `s`, towards `t`.
pub(crate) fn level_kernels(rs: &RiskSet, s: Stage, t: Stage) -> Result<LevelKernels> {
    (0..rs.model().atoms(s).len())
        .map(|b| rs.kernel_points(s, t, b))
        .collect()
}

type Sparse = Vec<(usize, f64)>;

impl Plan {
    /// A plan over `stages` (which must start at the root and end at the
    /// terminal stage) with every level free.
    pub fn free(stages: Vec<Stage>) -> Self {
        let levels = (1..stages.len()).map(|_| None).collect();
        Plan { stages, levels }
    }

    /// Stages `root, s, t, terminal` with only `s -> t` constrained.
    pub fn projection(rs: &RiskSet, s: Stage, t: Stage) -> Result<Self> {
        let m = rs.model();
        let mut stages = vec![m.root(), s, t, m.terminal()];
        stages.dedup();
        let mut plan = Plan::free(stages);
        let l = plan.stages.iter().position(|&x| x == s).unwrap();
        plan.levels[l] = Some(level_kernels(rs, s, t)?);
        Ok(plan)
    }

    fn kernels_at(&self, model: &ScenarioModel, l: usize, atom: usize) -> Vec<Vec<f64>> {
        match &self.levels[l] {
            Some(k) => k[atom].clone(),
            None => {
                let c = model
                    .children(self.stages[l], self.stages[l + 1], atom)
                    .len();
                (0..c)
                    .map(|j| {
                        let mut u = vec![0.0; c];
                        u[j] = 1.0;
                        u
                    })
                    .collect()
            }
        }
    }

    /// Number of distinct assemblies, saturating at `usize::MAX`.
    pub fn count(&self, model: &ScenarioModel) -> usize {
        let mut memo = HashMap::new();
        self.count_at(model, 0, 0, &mut memo)
    }

    fn count_at(
        &self,
        model: &ScenarioModel,
        l: usize,
        atom: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if l + 1 == self.stages.len() {
            return 1;
        }
        if let Some(&c) = memo.get(&(l, atom)) {
            return c;
        }
        let zero = model.tolerances().zero;
        let children = model.children(self.stages[l], self.stages[l + 1], atom);
        let mut total = 0usize;
        for k in self.kernels_at(model, l, atom) {
            let mut prod = 1usize;
            for (c, &p) in children.iter().zip(&k) {
                if p > zero {
                    prod = prod.saturating_mul(self.count_at(model, l + 1, *c, memo));
                }
            }
            total = total.saturating_add(prod);
        }
        memo.insert((l, atom), total);
        total
    }

    /// All assemblies, as dense probability vectors.
    pub fn vertices(&self, model: &ScenarioModel, what: &'static str) -> Result<Vec<Vec<f64>>> {
        let bound = model.tolerances().max_assemblies;
        let size = self.count(model);
        if size > bound {
            return Err(Error::TooLarge { what, size, bound });
        }
        if size == 0 {
            return Err(Error::EmptySet);
        }
        let mut memo = HashMap::new();
        let sparse = self.assemble(model, 0, 0, &mut memo);
        Ok(sparse
            .iter()
            .map(|s| {
                let mut v = vec![0.0; model.n()];
                for &(w, p) in s {
                    v[w] += p;
                }
                v
            })
            .collect())
    }

    fn assemble(
        &self,
        model: &ScenarioModel,
        l: usize,
        atom: usize,
        memo: &mut HashMap<(usize, usize), Arc<Vec<Sparse>>>,
    ) -> Arc<Vec<Sparse>> {
        if l + 1 == self.stages.len() {
            let outcomes = &model.atoms(self.stages[l])[atom];
            return Arc::new(vec![vec![(outcomes[0], 1.0)]]);
        }
        if let Some(r) = memo.get(&(l, atom)) {
            return r.clone();
        }
        let zero = model.tolerances().zero;
        let children = model.children(self.stages[l], self.stages[l + 1], atom);
        let mut out = Vec::new();
        for k in self.kernels_at(model, l, atom) {
            let mut partial: Vec<Sparse> = vec![Vec::new()];
            for (c, &p) in children.iter().zip(&k) {
                if p <= zero {
                    continue;
                }
                let sub = self.assemble(model, l + 1, *c, memo);
                let mut next = Vec::with_capacity(partial.len() * sub.len());
                for base in &partial {
                    for s in sub.iter() {
                        let mut v = base.clone();
                        v.extend(s.iter().map(|&(w, x)| (w, x * p)));
                        next.push(v);
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        let out = Arc::new(out);
        memo.insert((l, atom), out.clone());
        out
    }

    /// Homogenized node facets `Σ_C a_C R(C) - b R(B) <= 0`.
    pub fn halfspaces(&self, model: &ScenarioModel) -> Result<Vec<Halfspace>> {
        let tol = model.tolerances().eps;
        let mut out = Vec::new();
        for (l, level) in self.levels.iter().enumerate() {
            let Some(level) = level else { continue };
            let (s, t) = (self.stages[l], self.stages[l + 1]);
            for (b, pts) in level.iter().enumerate() {
                let children = model.children(s, t, b);
                if children.len() < 2 {
                    continue;
                }
                let source = &model.atoms(s)[b];
                for h in polytope::facets(pts, tol)? {
                    let mut a = vec![0.0; model.n()];
                    for (c, ac) in children.iter().zip(&h.a) {
                        for &w in &model.atoms(t)[*c] {
                            a[w] += ac;
                        }
                    }
                    for &w in source {
                        a[w] -= h.b;
                    }
                    if a.iter().any(|x| x.abs() > 1e-12) {
                        out.push(Halfspace::new(a, 0.0));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn into_riskset(self, model: Arc<ScenarioModel>, what: &'static str) -> Result<RiskSet> {
        let verts = self.vertices(&model, what)?;
        let h = self.halfspaces(&model)?;
        Ok(RiskSet::from_parts(model, verts, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::StageLabel;

    fn tree() -> Arc<ScenarioModel> {
        Arc::new(
            ScenarioModel::new(
                (0..4).map(|w| format!("w{w}")).collect(),
                ["0", "1", "2"]
                    .iter()
                    .map(|l| l.parse::<StageLabel>().unwrap())
                    .collect(),
                vec![
                    vec![vec![0, 1, 2, 3]],
                    vec![vec![0, 1], vec![2, 3]],
                    (0..4).map(|w| vec![w]).collect(),
                ],
                vec![0.25; 4],
            )
            .unwrap(),
        )
    }

    #[test]
    fn free_plan_yields_point_masses() {
        let m = tree();
        let plan = Plan::free(m.stages().collect());
        assert_eq!(plan.count(&m), 4);
        let v = plan.vertices(&m, "test").unwrap();
        assert_eq!(v.len(), 4);
        assert!(plan.halfspaces(&m).unwrap().is_empty());
    }

    #[test]
    fn constrained_counts_and_products() {
        let m = tree();
        let mut plan = Plan::free(m.stages().collect());
        plan.levels[0] = Some(vec![vec![vec![0.5, 0.5]]]);
        plan.levels[1] = Some(vec![
            vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            vec![vec![0.8, 0.2], vec![0.2, 0.8]],
        ]);
        assert_eq!(plan.count(&m), 4);
        let v = plan.vertices(&m, "test").unwrap();
        assert!(v.iter().any(|p| p
            .iter()
            .zip([0.4, 0.1, 0.1, 0.4])
            .all(|(a, b)| (a - b).abs() < 1e-12)));
        let h = plan.halfspaces(&m).unwrap();
        for p in &v {
            assert!(h.iter().all(|hs| hs.slack(p) >= -1e-12));
        }
        assert!(h.iter().any(|hs| hs.slack(&[0.5, 0.0, 0.0, 0.5]) < -1e-6));
    }

    #[test]
    fn size_bound_is_enforced() {
        let m = Arc::new((*tree()).clone().with_tolerances(crate::Tolerances {
            max_assemblies: 3,
            ..Default::default()
        }));
        let plan = Plan::free(m.stages().collect());
        assert!(matches!(
            plan.vertices(&m, "test"),
            Err(Error::TooLarge {
                size: 4,
                bound: 3,
                ..
            })
        ));
    }
}

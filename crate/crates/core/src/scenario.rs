//! Finite filtered probability model.
//!
//! Outcomes are indexed `0..n`. Information is a refining sequence of
//! partitions over a stage grid `0 < 0+ < 1 < 1+ < ... < T`, where the
//! half-steps are optional and behave exactly like whole stages.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use crate::error::ModelError;
use crate::riskset::Measure;
use crate::{Tolerances, MAX_GRID, MAX_OUTCOMES};

/// Position of a stage on the time axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StageLabel {
    Time(usize),
    Half(usize),
}

impl StageLabel {
    fn ordinal(self) -> usize {
        match self {
            StageLabel::Time(t) => 2 * t,
            StageLabel::Half(t) => 2 * t + 1,
        }
    }

    pub fn is_half(self) -> bool {
        matches!(self, StageLabel::Half(_))
    }
}

impl PartialOrd for StageLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for StageLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.ordinal().cmp(&other.ordinal())
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageLabel::Time(t) => write!(f, "{t}"),
            StageLabel::Half(t) => write!(f, "{t}+"),
        }
    }
}

impl FromStr for StageLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (digits, half) = match s.strip_suffix('+') {
            Some(d) => (d, true),
            None => (s, false),
        };
        let t: usize = digits
            .parse()
            .map_err(|_| ModelError::BadGrid(format!("unparseable stage label {s:?}")))?;
        Ok(if half {
            StageLabel::Half(t)
        } else {
            StageLabel::Time(t)
        })
    }
}

/// A stage of a particular model: its grid position plus its label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stage {
    pub index: usize,
    pub label: StageLabel,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.label.fmt(f)
    }
}

/// Partition of `0..n` into atoms, canonically ordered by smallest element.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    atoms: Vec<Vec<usize>>,
    lookup: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, atoms: Vec<Vec<usize>>) -> Result<Self, String> {
        let mut lookup = vec![usize::MAX; n];
        let mut atoms: Vec<Vec<usize>> = atoms
            .into_iter()
            .map(|mut a| {
                a.sort_unstable();
                a
            })
            .collect();
        for atom in &atoms {
            if atom.is_empty() {
                return Err("empty atom".into());
            }
        }
        atoms.sort_by_key(|a| a[0]);
        for (id, atom) in atoms.iter().enumerate() {
            for &w in atom {
                if w >= n {
                    return Err(format!("outcome {w} out of range (n = {n})"));
                }
                if lookup[w] != usize::MAX {
                    return Err(format!("outcome {w} appears in two atoms"));
                }
                lookup[w] = id;
            }
        }
        if let Some(w) = lookup.iter().position(|&a| a == usize::MAX) {
            return Err(format!("outcome {w} is not covered"));
        }
        Ok(Partition { atoms, lookup })
    }

    pub fn trivial(n: usize) -> Self {
        Partition {
            atoms: vec![(0..n).collect()],
            lookup: vec![0; n],
        }
    }

    pub fn discrete(n: usize) -> Self {
        Partition {
            atoms: (0..n).map(|w| vec![w]).collect(),
            lookup: (0..n).collect(),
        }
    }

    pub fn atoms(&self) -> &[Vec<usize>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn n(&self) -> usize {
        self.lookup.len()
    }

    pub fn atom_of(&self, outcome: usize) -> usize {
        self.lookup[outcome]
    }

    /// First atom of `self` not contained in a single atom of `coarser`.
    pub fn refinement_violation(&self, coarser: &Partition) -> Option<usize> {
        self.atoms.iter().position(|atom| {
            let a = coarser.atom_of(atom[0]);
            atom.iter().any(|&w| coarser.atom_of(w) != a)
        })
    }

    pub fn refines(&self, coarser: &Partition) -> bool {
        self.refinement_violation(coarser).is_none()
    }

    /// Coarsest partition refining both.
    pub fn common_refinement(&self, other: &Partition) -> Partition {
        let n = self.n();
        let mut keyed: Vec<((usize, usize), usize)> = (0..n)
            .map(|w| ((self.atom_of(w), other.atom_of(w)), w))
            .collect();
        keyed.sort_unstable();
        let mut atoms: Vec<Vec<usize>> = Vec::new();
        let mut last = None;
        for (key, w) in keyed {
            if last != Some(key) {
                atoms.push(Vec::new());
                last = Some(key);
            }
            atoms.last_mut().unwrap().push(w);
        }
        Partition::new(n, atoms).expect("common refinement is a partition")
    }
}

/// Outcomes, stage grid, refining partitions and a full-support reference
/// measure `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioModel {
    outcomes: Vec<String>,
    grid: Vec<StageLabel>,
    partitions: Vec<Partition>,
    reference: Vec<f64>,
    tol: Tolerances,
}

impl ScenarioModel {
    /// Builds and validates a model. Raw partitions are lists of outcome
    /// indices; atoms are re-ordered canonically.
    pub fn new(
        outcomes: Vec<String>,
        grid: Vec<StageLabel>,
        partitions: Vec<Vec<Vec<usize>>>,
        reference: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = outcomes.len();
        if n == 0 {
            return Err(ModelError::BadGrid("no outcomes".into()));
        }
        if n > MAX_OUTCOMES {
            return Err(ModelError::OutOfRange(format!(
                "{n} outcomes exceed the bound {MAX_OUTCOMES}"
            )));
        }
        validate_grid(&grid)?;
        if partitions.len() != grid.len() {
            return Err(ModelError::BadGrid(format!(
                "{} partitions for {} stages",
                partitions.len(),
                grid.len()
            )));
        }
        let partitions = partitions
            .into_iter()
            .zip(&grid)
            .map(|(atoms, label)| {
                Partition::new(n, atoms).map_err(|reason| ModelError::BadPartition {
                    stage: label.to_string(),
                    reason,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_partitions(outcomes, grid, partitions, reference)
    }

    pub fn from_partitions(
        outcomes: Vec<String>,
        grid: Vec<StageLabel>,
        partitions: Vec<Partition>,
        reference: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = outcomes.len();
        validate_grid(&grid)?;
        if partitions.len() != grid.len() || partitions.iter().any(|p| p.n() != n) {
            return Err(ModelError::BadGrid("partition shape does not match".into()));
        }
        let reference = validate_reference(n, reference)?;
        let model = ScenarioModel {
            outcomes,
            grid,
            partitions,
            reference,
            tol: Tolerances::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the terminal and refinement invariants, reporting the first
    /// violation.
    pub fn validate(&self) -> Result<(), ModelError> {
        let first = &self.partitions[0];
        if first.len() != 1 {
            return Err(ModelError::BadTerminals {
                stage: self.grid[0].to_string(),
                reason: format!("initial partition has {} atoms, expected 1", first.len()),
            });
        }
        let last = self.partitions.last().unwrap();
        if last.len() != self.n() {
            return Err(ModelError::BadTerminals {
                stage: self.grid.last().unwrap().to_string(),
                reason: "final partition is not discrete".into(),
            });
        }
        for k in 1..self.partitions.len() {
            if let Some(atom) = self.partitions[k].refinement_violation(&self.partitions[k - 1]) {
                return Err(ModelError::NonRefining {
                    stage: self.grid[k].to_string(),
                    atom,
                    earlier: self.grid[k - 1].to_string(),
                });
            }
        }
        if let Some(w) = self.reference.iter().position(|&p| p <= 0.0) {
            return Err(ModelError::NoFullSupport { outcome: w });
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn reference_measure(&self) -> Measure {
        Measure::from_raw(self.reference.clone())
    }

    pub fn grid(&self) -> &[StageLabel] {
        &self.grid
    }

    pub fn stages(&self) -> impl DoubleEndedIterator<Item = Stage> + ExactSizeIterator + '_ {
        self.grid
            .iter()
            .enumerate()
            .map(|(index, &label)| Stage { index, label })
    }

    pub fn stage(&self, index: usize) -> Result<Stage, ModelError> {
        self.grid
            .get(index)
            .map(|&label| Stage { index, label })
            .ok_or_else(|| ModelError::OutOfRange(format!("stage index {index}")))
    }

    pub fn stage_by_label(&self, label: StageLabel) -> Result<Stage, ModelError> {
        self.grid
            .iter()
            .position(|&l| l == label)
            .map(|index| Stage { index, label })
            .ok_or_else(|| ModelError::OutOfRange(format!("stage {label} not in grid")))
    }

    pub fn stage_named(&self, label: &str) -> Result<Stage, ModelError> {
        self.stage_by_label(label.parse()?)
    }

    pub fn root(&self) -> Stage {
        Stage {
            index: 0,
            label: self.grid[0],
        }
    }

    pub fn terminal(&self) -> Stage {
        let index = self.grid.len() - 1;
        Stage {
            index,
            label: self.grid[index],
        }
    }

    pub fn next(&self, stage: Stage) -> Option<Stage> {
        self.stage(stage.index + 1).ok()
    }

    /// Largest whole time `T`.
    pub fn horizon(&self) -> usize {
        match self.terminal().label {
            StageLabel::Time(t) => t,
            StageLabel::Half(t) => t + 1,
        }
    }

    pub fn has_half_steps(&self) -> bool {
        self.grid.iter().any(|l| l.is_half())
    }

    fn check_stage(&self, stage: Stage) -> Result<(), ModelError> {
        if self.grid.get(stage.index) != Some(&stage.label) {
            return Err(ModelError::OutOfRange(format!(
                "stage {} (index {}) does not belong to this model",
                stage.label, stage.index
            )));
        }
        Ok(())
    }

    pub fn partition(&self, stage: Stage) -> &Partition {
        &self.partitions[stage.index]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn atoms(&self, stage: Stage) -> &[Vec<usize>] {
        self.partitions[stage.index].atoms()
    }

    pub fn atom_of(&self, stage: Stage, outcome: usize) -> Result<usize, ModelError> {
        self.check_stage(stage)?;
        if outcome >= self.n() {
            return Err(ModelError::OutOfRange(format!(
                "outcome {outcome} (n = {})",
                self.n()
            )));
        }
        Ok(self.partitions[stage.index].atom_of(outcome))
    }

    /// Atoms of stage `t` contained in atom `atom` of stage `s`, ascending.
    pub fn children(&self, s: Stage, t: Stage, atom: usize) -> Vec<usize> {
        let finer = &self.partitions[t.index];
        let mut out: Vec<usize> = self.partitions[s.index].atoms()[atom]
            .iter()
            .map(|&w| finer.atom_of(w))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Sorted outcome labels of an atom joined by `|`.
    pub fn atom_label(&self, stage: Stage, atom: usize) -> String {
        let mut labels: Vec<&str> = self.atoms(stage)[atom]
            .iter()
            .map(|&w| self.outcomes[w].as_str())
            .collect();
        labels.sort_unstable();
        labels.join("|")
    }

    /// Whether `values` are constant on each atom of the stage.
    pub fn is_measurable(&self, claim: &Claim, stage: Stage) -> bool {
        self.atoms(stage).iter().all(|atom| {
            let v = claim.values[atom[0]];
            atom.iter().all(|&w| claim.values[w] == v)
        })
    }

    /// Tolerant variant of [`is_measurable`](Self::is_measurable).
    pub fn is_measurable_within(&self, claim: &Claim, stage: Stage, tol: f64) -> bool {
        self.atoms(stage).iter().all(|atom| {
            let v = claim.values[atom[0]];
            atom.iter().all(|&w| (claim.values[w] - v).abs() <= tol)
        })
    }

    /// Lifts one value per atom of `stage` to a claim.
    pub fn lift(&self, stage: Stage, atom_values: &[f64]) -> Claim {
        let p = self.partition(stage);
        Claim::new((0..self.n()).map(|w| atom_values[p.atom_of(w)]).collect())
    }

    /// One value per atom, read at each atom's first outcome.
    pub fn atom_values(&self, claim: &Claim, stage: Stage) -> Vec<f64> {
        self.atoms(stage)
            .iter()
            .map(|atom| claim.values[atom[0]])
            .collect()
    }
}

fn validate_grid(grid: &[StageLabel]) -> Result<(), ModelError> {
    if grid.len() < 2 {
        return Err(ModelError::BadGrid("grid needs at least two stages".into()));
    }
    if grid.len() > MAX_GRID {
        return Err(ModelError::BadGrid(format!(
            "grid length {} exceeds bound {MAX_GRID}",
            grid.len()
        )));
    }
    if grid[0] != StageLabel::Time(0) {
        return Err(ModelError::BadGrid("grid must start at 0".into()));
    }
    if grid.last().unwrap().is_half() {
        return Err(ModelError::BadGrid("grid must end at a whole time".into()));
    }
    for w in grid.windows(2) {
        if w[0] >= w[1] {
            return Err(ModelError::BadGrid(format!(
                "stage {} does not follow {}",
                w[1], w[0]
            )));
        }
    }
    let mut t = 0;
    for label in grid {
        match *label {
            StageLabel::Time(s) => {
                if s != t {
                    return Err(ModelError::BadGrid(format!("missing whole time {t}")));
                }
                t += 1;
            }
            StageLabel::Half(s) => {
                if s + 1 != t {
                    return Err(ModelError::BadGrid(format!("misplaced half-step {label}")));
                }
            }
        }
    }
    Ok(())
}

fn validate_reference(n: usize, reference: Vec<f64>) -> Result<Vec<f64>, ModelError> {
    if reference.len() != n {
        return Err(ModelError::BadReference(format!(
            "{} weights for {n} outcomes",
            reference.len()
        )));
    }
    if let Some(w) = reference.iter().position(|&p| !(p > 0.0)) {
        return Err(ModelError::NoFullSupport { outcome: w });
    }
    let total: f64 = reference.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ModelError::BadReference(format!("weights sum to {total}")));
    }
    Ok(reference.into_iter().map(|p| p / total).collect())
}

/// Payoff vector over outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    values: Vec<f64>,
}

impl Claim {
    pub fn new(values: Vec<f64>) -> Self {
        Claim { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Claim { values: vec![c; n] }
    }

    pub fn indicator(n: usize, outcomes: &[usize]) -> Self {
        let mut values = vec![0.0; n];
        for &w in outcomes {
            values[w] = 1.0;
        }
        Claim { values }
    }

    /// A claim declared measurable at `stage`; rejected otherwise.
    pub fn measurable_at(
        model: &ScenarioModel,
        values: Vec<f64>,
        stage: Stage,
    ) -> crate::Result<Self> {
        if values.len() != model.n() {
            return Err(crate::Error::Dimension {
                expected: model.n(),
                got: values.len(),
            });
        }
        let claim = Claim { values };
        if !model.is_measurable(&claim, stage) {
            return Err(crate::Error::NotMeasurable {
                stage: stage.to_string(),
            });
        }
        Ok(claim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Claim {
        Claim::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs_diff(&self, other: &Claim) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for Claim {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl Add for &Claim {
    type Output = Claim;
    fn add(self, rhs: &Claim) -> Claim {
        Claim::new(
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl Sub for &Claim {
    type Output = Claim;
    fn sub(self, rhs: &Claim) -> Claim {
        Claim::new(
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

impl Mul<f64> for &Claim {
    type Output = Claim;
    fn mul(self, rhs: f64) -> Claim {
        self.map(|v| v * rhs)
    }
}

/// Conditional expectation `E_Q(X | G_stage)`. Atoms where `Q` has zero
/// mass fall back to the reference measure.
pub fn condexp(measure: &Measure, claim: &Claim, stage: Stage, model: &ScenarioModel) -> Claim {
    let zero = model.tolerances().zero;
    let mut atom_values = Vec::with_capacity(model.atoms(stage).len());
    for atom in model.atoms(stage) {
        let q = measure.weights();
        let mass: f64 = atom.iter().map(|&w| q[w]).sum();
        let weights = if mass > zero { q } else { model.reference() };
        let mass = if mass > zero {
            mass
        } else {
            atom.iter().map(|&w| weights[w]).sum()
        };
        let num: f64 = atom.iter().map(|&w| weights[w] * claim.values[w]).sum();
        atom_values.push(num / mass);
    }
    model.lift(stage, &atom_values)
}

//! Dense two-phase simplex for the small linear programs the engine solves:
//! hull membership, homogenized ratio maximization, cone decompositions and
//! separating claims.
//!
//! Problems are `maximize c·x` over rows `a·x {<=,>=,=} b` with `x >= 0`
//! unless a variable is declared free. Pricing is Dantzig's rule with a
//! fallback to Bland's rule after a run of degenerate pivots.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult {
    Optimal {
        x: Vec<f64>,
        value: f64,
    },
    /// Phase one could not drive the artificial mass below the feasibility
    /// tolerance; `residual` is the minimal L1 constraint violation.
    Infeasible {
        residual: f64,
    },
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    n: usize,
    free: Vec<bool>,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_ITERATIONS: usize = 200_000;
const DEGENERATE_RUN: usize = 40;

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram {
            n,
            free: vec![false; n],
            objective: vec![0.0; n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn set_free(&mut self, j: usize) {
        self.free[j] = true;
    }

    pub fn maximize(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n);
        self.objective = c;
    }

    pub fn minimize(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n);
        self.objective = c.into_iter().map(|v| -v).collect();
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.n);
        self.rows.push((coeffs, rel, rhs));
    }

    pub fn add_sparse_row(&mut self, coeffs: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut row = vec![0.0; self.n];
        for &(j, v) in coeffs {
            row[j] += v;
        }
        self.rows.push((row, rel, rhs));
    }

    /// Minimal L1 violation of the constraints (phase one only).
    pub fn min_infeasibility(&self) -> f64 {
        let mut t = Tableau::build(self);
        t.phase_one()
    }

    pub fn solve(&self, feasibility_tol: f64) -> LpResult {
        let mut t = Tableau::build(self);
        let residual = t.phase_one();
        if residual > feasibility_tol {
            return LpResult::Infeasible { residual };
        }
        t.evict_artificials();
        match t.phase_two(self) {
            Some(value) => LpResult::Optimal {
                x: t.solution(self),
                value,
            },
            None => LpResult::Unbounded,
        }
    }
}

struct Tableau {
    m: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    /// Column index of every structural variable's positive and negative part.
    pos_col: Vec<usize>,
    neg_col: Vec<Option<usize>>,
    artificial_start: usize,
    cost: Vec<f64>,
    value: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut pos_col = Vec::with_capacity(lp.n);
        let mut neg_col = Vec::with_capacity(lp.n);
        let mut col = 0;
        for j in 0..lp.n {
            pos_col.push(col);
            col += 1;
            if lp.free[j] {
                neg_col.push(Some(col));
                col += 1;
            } else {
                neg_col.push(None);
            }
        }
        let structural = col;
        let m = lp.rows.len();
        let mut normalized = Vec::with_capacity(m);
        let mut slack_count = 0;
        let mut artificial_count = 0;
        for (coeffs, rel, rhs) in &lp.rows {
            let (sign, rel) = if *rhs < 0.0 {
                let flipped = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (-1.0, flipped)
            } else {
                (1.0, *rel)
            };
            match rel {
                Relation::Le => slack_count += 1,
                Relation::Ge => {
                    slack_count += 1;
                    artificial_count += 1
                }
                Relation::Eq => artificial_count += 1,
            }
            normalized.push((coeffs, sign, rel, rhs * sign));
        }
        let artificial_start = structural + slack_count;
        let width = artificial_start + artificial_count + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut next_slack = structural;
        let mut next_art = artificial_start;
        for (i, (coeffs, sign, rel, rhs)) in normalized.into_iter().enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            for (j, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    row[pos_col[j]] = sign * a;
                    if let Some(nc) = neg_col[j] {
                        row[nc] = -sign * a;
                    }
                }
            }
            row[width - 1] = rhs;
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        Tableau {
            m,
            width,
            data,
            basis,
            pos_col,
            neg_col,
            artificial_start,
            cost: vec![0.0; width - 1],
            value: 0.0,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.artificial_start
    }

    /// Loads reduced costs for the objective `c` (indexed by tableau column).
    fn load_objective(&mut self, c: &[f64]) {
        let cols = self.width - 1;
        self.cost = c.to_vec();
        self.value = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.data[i * self.width..(i + 1) * self.width];
                for j in 0..cols {
                    self.cost[j] -= cb * row[j];
                }
                self.value += cb * row[cols];
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.data[r * w + e];
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        self.data[r * w + e] = 1.0;
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.data[i * w + e];
            if f != 0.0 {
                let row = &mut self.data[i * w..(i + 1) * w];
                for j in 0..w {
                    if pivot_row[j] != 0.0 {
                        row[j] -= f * pivot_row[j];
                    }
                }
                row[e] = 0.0;
            }
        }
        let f = self.cost[e];
        if f != 0.0 {
            for j in 0..w - 1 {
                if pivot_row[j] != 0.0 {
                    self.cost[j] -= f * pivot_row[j];
                }
            }
            self.cost[e] = 0.0;
            self.value += f * pivot_row[w - 1];
        }
        self.basis[r] = e;
    }

    /// Runs simplex iterations maximizing the loaded objective. Returns
    /// false on unboundedness.
    fn optimize(&mut self, allow_artificial: bool) -> bool {
        let cols = self.width - 1;
        let mut degenerate = 0;
        for _ in 0..MAX_ITERATIONS {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = COST_TOL;
            for j in 0..cols {
                if !allow_artificial && self.is_artificial(j) {
                    continue;
                }
                if self.cost[j] > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = self.cost[j];
                }
            }
            let Some(e) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, e);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return false;
            };
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
        }
        true
    }

    fn phase_one(&mut self) -> f64 {
        let cols = self.width - 1;
        let c: Vec<f64> = (0..cols)
            .map(|j| if self.is_artificial(j) { -1.0 } else { 0.0 })
            .collect();
        self.load_objective(&c);
        self.optimize(true);
        (-self.value).max(0.0)
    }

    fn evict_artificials(&mut self) {
        let cols = self.width - 1;
        for i in 0..self.m {
            if !self.is_artificial(self.basis[i]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.artificial_start {
                let a = self.at(i, j).abs();
                if a > 1e-9 && best.map_or(true, |(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(i, j);
            } else {
                // redundant row: zero it so it never constrains phase two
                for j in 0..cols {
                    if !self.is_artificial(j) {
                        self.data[i * self.width + j] = 0.0;
                    }
                }
            }
        }
    }

    fn phase_two(&mut self, lp: &LinearProgram) -> Option<f64> {
        let cols = self.width - 1;
        let mut c = vec![0.0; cols];
        for j in 0..lp.n {
            c[self.pos_col[j]] = lp.objective[j];
            if let Some(nc) = self.neg_col[j] {
                c[nc] = -lp.objective[j];
            }
        }
        self.load_objective(&c);
        if self.optimize(false) {
            Some(self.value)
        } else {
            None
        }
    }

    fn solution(&self, lp: &LinearProgram) -> Vec<f64> {
        let cols = self.width - 1;
        let mut col_val = vec![0.0; cols];
        for i in 0..self.m {
            col_val[self.basis[i]] = self.rhs(i);
        }
        (0..lp.n)
            .map(|j| {
                let mut v = col_val[self.pos_col[j]];
                if let Some(nc) = self.neg_col[j] {
                    v -= col_val[nc];
                }
                v
            })
            .collect()
    }
}

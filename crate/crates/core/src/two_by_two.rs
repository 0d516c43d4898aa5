//! The two-by-two insurance example: `Ω = I × F` with `I = {i, i'}`,
//! `F = {f, f'}`, one period, uniform reference, and the pricing set
//! `{Q : Λ^Q <= 1 + ε, Λ^Q_0+ = 1}`.
//!
//! Outcomes are ordered `if, if', i'f, i'f'`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::consistency::is_mstable;
use crate::error::{Error, Result};
use crate::intermarket::{product_space, qf, qi, ProductModel};
use crate::risk::rho;
use crate::riskset::{Halfspace, RiskSet};
use crate::scenario::{Claim, ScenarioModel, StageLabel};

fn two_point(a: &str, b: &str) -> ScenarioModel {
    ScenarioModel::new(
        vec![a.into(), b.into()],
        vec![StageLabel::Time(0), StageLabel::Time(1)],
        vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
        vec![0.5, 0.5],
    )
    .expect("two-point factor is valid")
}

/// The product model `I × F` with uniform factors.
pub fn product() -> ProductModel {
    product_space(&two_point("f", "f'"), &two_point("i", "i'")).expect("product is valid")
}

pub fn model() -> Arc<ScenarioModel> {
    product().model().clone()
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {eps} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// `Q^{a,b} = ¼(1+aε, 1+bε, 1-aε, 1-bε)`.
pub fn extreme_point(eps: f64, a: f64, b: f64) -> Vec<f64> {
    vec![
        0.25 * (1.0 + a * eps),
        0.25 * (1.0 + b * eps),
        0.25 * (1.0 - a * eps),
        0.25 * (1.0 - b * eps),
    ]
}

pub fn extreme_points(eps: f64) -> Vec<Vec<f64>> {
    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .map(|&(a, b)| extreme_point(eps, a, b))
        .collect()
}

fn column_sums() -> Vec<Halfspace> {
    vec![
        Halfspace::new(vec![1.0, 0.0, 1.0, 0.0], 0.5),
        Halfspace::new(vec![-1.0, 0.0, -1.0, 0.0], -0.5),
    ]
}

/// `Λ <= 1 + ε` and `Λ_0+ = 1` as half-spaces.
pub fn constraints(eps: f64) -> Vec<Halfspace> {
    let mut h: Vec<Halfspace> = (0..4)
        .map(|j| {
            let mut a = vec![0.0; 4];
            a[j] = 1.0;
            Halfspace::new(a, 0.25 * (1.0 + eps))
        })
        .collect();
    h.extend(column_sums());
    h
}

pub fn pricing_set(eps: f64) -> Result<RiskSet> {
    check_epsilon(eps)?;
    RiskSet::from_constraints(model(), constraints(eps))
}

/// Measures with both columns of mass one half.
pub fn financial_set(model: &Arc<ScenarioModel>) -> Result<RiskSet> {
    RiskSet::from_constraints(model.clone(), column_sums())
}

/// `1/δ <= q(i,g)/q(i',g) <= δ` on both columns, `δ = (1+ε)/(1-ε)`.
pub fn intermediate_set(model: &Arc<ScenarioModel>, eps: f64) -> Result<RiskSet> {
    check_epsilon(eps)?;
    let delta = (1.0 + eps) / (1.0 - eps);
    let mut h = Vec::new();
    for (top, bottom) in [(0, 2), (1, 3)] {
        for (x, y) in [(top, bottom), (bottom, top)] {
            let mut a = vec![0.0; 4];
            a[x] = 1.0;
            a[y] = -delta;
            h.push(Halfspace::new(a, 0.0));
        }
    }
    RiskSet::from_constraints(model.clone(), h)
}

/// `α_X(g) = ½(X(i,g) + ε|X(i,g)| + X(i',g) + ε|X(i',g)|)`, with `g` the
/// financial outcome (0 for `f`, 1 for `f'`).
pub fn alpha(eps: f64, x: &Claim, g: usize) -> f64 {
    let (a, b) = (x[g], x[2 + g]);
    0.5 * (a + eps * a.abs() + b + eps * b.abs())
}

/// The conditional price at `0+` for any claim:
/// `½(X(i,g) + X(i',g)) + ½ε|X(i,g) - X(i',g)|`. It agrees with
/// [`alpha`] exactly when `X(i,g)` and `X(i',g)` do not share a strict sign.
pub fn rho_half(eps: f64, x: &Claim, g: usize) -> f64 {
    let (a, b) = (x[g], x[2 + g]);
    0.5 * (a + b) + 0.5 * eps * (a - b).abs()
}

/// A claim whose columns have entries of opposite sign (or a zero).
pub fn alternating_claim(rng: &mut impl Rng) -> Claim {
    let mut v = vec![0.0; 4];
    for g in 0..2 {
        let a: f64 = rng.gen_range(0.0..3.0);
        let b: f64 = rng.gen_range(0.0..3.0);
        let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        v[g] = s * a;
        v[2 + g] = -s * b;
    }
    Claim::new(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleCheck {
    pub name: String,
    pub expected: f64,
    pub computed: f64,
}

impl ExampleCheck {
    pub fn diff(&self) -> f64 {
        (self.expected - self.computed).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleReport {
    pub epsilon: f64,
    pub checks: Vec<ExampleCheck>,
}

impl ExampleReport {
    pub fn max_diff(&self) -> f64 {
        self.checks.iter().map(|c| c.diff()).fold(0.0, f64::max)
    }

    pub fn pass(&self, tol: f64) -> bool {
        self.max_diff() <= tol
    }
}

/// Rebuilds the example at `eps` and compares every closed form with the
/// engine.
pub fn example_report(eps: f64) -> Result<ExampleReport> {
    check_epsilon(eps)?;
    let rs = pricing_set(eps)?;
    let m = rs.model().clone();
    let pm = product();
    let half = m.stage_named("0+")?;
    let mut checks = Vec::new();
    let mut push = |name: String, expected: f64, computed: f64| {
        checks.push(ExampleCheck {
            name,
            expected,
            computed,
        })
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    push("vertex count".into(), 4.0, rs.vertices().len() as f64);
    for (k, q) in extreme_points(eps).iter().enumerate() {
        let d = rs
            .vertices()
            .iter()
            .map(|v| {
                v.weights()
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        push(format!("extreme point {k} distance"), 0.0, d);
    }

    for x in [-2.0, -1.0, 0.0, 1.0, 2.5] {
        let r = rho(&rs, &Claim::new(vec![x, 0.0, 0.0, 0.0]), half)?;
        push(
            format!("rho_0+({x} 1_if) on f"),
            0.5 * (x + eps * x.abs()),
            r[0],
        );
        push(format!("rho_0+({x} 1_if) on f'"), 0.0, r[1]);
    }
    for g in 0..2 {
        let r = rho(&rs, &Claim::indicator(4, &[g]), half)?;
        push(
            format!("rho_0+(1_i{g}) on its atom"),
            0.5 * (1.0 + eps),
            r[g],
        );
        let r = rho(&rs, &(&Claim::indicator(4, &[g]) * -1.0), half)?;
        push(
            format!("rho_0+(-1_i{g}) on its atom"),
            -0.5 * (1.0 - eps),
            r[g],
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..20 {
        let x = alternating_claim(&mut rng);
        let r = rho(&rs, &x, half)?;
        for g in 0..2 {
            push(format!("alpha claim {k} atom {g}"), alpha(eps, &x, g), r[g]);
        }
    }
    for k in 0..20 {
        let x = Claim::new((0..4).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let r = rho(&rs, &x, half)?;
        for g in 0..2 {
            push(
                format!("general claim {k} atom {g}"),
                rho_half(eps, &x, g),
                r[g],
            );
        }
    }
    for k in 0..10 {
        let vals: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = m.lift(half, &vals);
        let mean = x.values().iter().sum::<f64>() / 4.0;
        push(
            format!("rho_0 of 0+-claim {k}"),
            mean,
            rho(&rs, &x, m.root())?[0],
        );
    }

    let fset = financial_set(&m)?;
    let iset = intermediate_set(&m, eps)?;
    let q_f = qf(&rs, &pm.market)?;
    let q_i = qi(&rs, &pm.market)?;
    push(
        "Q^F equals the column-sum set".into(),
        1.0,
        flag(q_f.set_equal(&fset)?),
    );
    push(
        "Q^I equals the ratio band".into(),
        1.0,
        flag(q_i.set_equal(&iset)?),
    );
    push(
        "Q^F ∩ Q^I equals Q".into(),
        1.0,
        flag(q_f.intersect(&q_i)?.set_equal(&rs)?),
    );
    push("Q is m-stable".into(), 1.0, flag(is_mstable(&rs)?));

    Ok(ExampleReport {
        epsilon: eps,
        checks,
    })
}

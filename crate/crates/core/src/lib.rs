//! Finite scenario-tree engine for multi-period coherent risk measures.
//!
//! A risk measure is given by a polytope of test probability measures on a
//! finite filtered outcome space. The crate evaluates conditional risk prices
//! stage by stage, checks and enforces time-consistency through m-stable
//! hulls, splits a global market into financial and intermediate parts over
//! a half-step refined filtration, builds product-space pricing mechanisms
//! that agree with a given financial pricing, and emits reserve plans.
//!
//! Everything is exact up to floating-point tolerances collected in
//! [`Tolerances`]; sets are kept in vertex and/or half-space form and
//! converted with a double-description enumerator.

pub mod consistency;
pub mod error;
pub mod intermarket;
pub mod lp;
mod pasting;
pub mod polytope;
pub mod risk;
pub mod riskset;
pub mod scenario;
pub mod two_by_two;

pub use consistency::{
    check_lower, check_strong, check_supermartingale, check_weak, consistency_report, is_mstable,
    mstable_hull, mstable_hull_on, project, ConsistencyReport, StrongVerdict, Verdict, Witness,
};
pub use error::{Error, ModelError, Result};
pub use intermarket::{
    build_refined, check_fi, extend_pi, lift_intermediate, one_period_premium, product_space,
    psi_build, qf, qi, split_reserve, verify_psi, FiReport, MarketModel, OnePeriodPremium,
    ProductModel, PsiReport, SplitReservePlan,
};
pub use risk::{
    cone_member, decompose_acceptance, decompose_acceptance_on, eta, is_acceptable, reserve_plan,
    rho, AdaptedProcess, Chain, Decomposition, ReservePlan,
};
pub use riskset::{density, node_kernel, Halfspace, Kernel, Measure, RiskSet};
pub use scenario::{condexp, Claim, Partition, ScenarioModel, Stage, StageLabel};

/// Numerical tolerances shared by every operation on a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// General comparison tolerance: acceptability, membership, risk gaps.
    pub eps: f64,
    /// Max-norm distance under which two vertices or kernels are identified.
    pub dedup: f64,
    /// Masses at or below this are treated as zero when conditioning.
    pub zero: f64,
    /// Largest number of recombined vertices a hull construction may emit.
    pub max_assemblies: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps: 1e-9,
            dedup: 1e-9,
            zero: 1e-12,
            max_assemblies: 4096,
        }
    }
}

/// Desk-scale limits.
pub const MAX_OUTCOMES: usize = 16;
pub const MAX_GRID: usize = 9;
pub const MAX_INPUT_VERTICES: usize = 64;

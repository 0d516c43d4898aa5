mod common;

use std::sync::Arc;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riskchain::{
    check_fi, check_strong, cone_member, consistency_report, extend_pi, is_mstable,
    lift_intermediate, mstable_hull, psi_build, qf, qi, rho, split_reserve, two_by_two, Claim,
    Error, Halfspace, Measure, ModelError, RiskSet, ScenarioModel, Tolerances,
};

fn binary_tree(tol: Tolerances) -> Arc<ScenarioModel> {
    Arc::new(
        ScenarioModel::new(
            names(4),
            labels(&["0", "1", "2"]),
            vec![
                vec![vec![0, 1, 2, 3]],
                vec![vec![0, 1], vec![2, 3]],
                (0..4).map(|w| vec![w]).collect(),
            ],
            vec![0.25; 4],
        )
        .unwrap()
        .with_tolerances(tol),
    )
}

#[test]
fn crossed_set_is_not_mstable_and_its_hull_is() {
    let rs = crossed();
    assert!(!is_mstable(&rs).unwrap());
    let hull = mstable_hull(&rs).unwrap();
    assert_eq!(hull.vertices().len(), 4);
    assert!(is_mstable(&hull).unwrap());
    let report = consistency_report(&rs, &[]).unwrap();
    assert!(!report.strong.pass);
    assert!(!report.mstable);
    let w = report.strong.witness.unwrap();
    assert!(w.gap > 1e-6);
}

#[test]
fn hull_size_bound_is_enforced() {
    let tol = Tolerances {
        max_assemblies: 3,
        ..Tolerances::default()
    };
    let rs = RiskSet::from_vertices(
        binary_tree(tol),
        vec![vec![0.4, 0.1, 0.4, 0.1], vec![0.1, 0.4, 0.1, 0.4]],
    )
    .unwrap();
    let err = mstable_hull(&rs).unwrap_err();
    assert_eq!(err.code(), "TOO_LARGE");
    assert!(matches!(
        err,
        Error::TooLarge {
            size: 4,
            bound: 3,
            ..
        }
    ));
}

#[test]
fn model_validation_codes() {
    let bad = |grid: &[&str], parts: Vec<Vec<Vec<usize>>>, p: Vec<f64>| {
        ScenarioModel::new(names(2), labels(grid), parts, p).unwrap_err()
    };
    let trivial = vec![vec![0, 1]];
    let discrete = vec![vec![0], vec![1]];
    assert!(matches!(
        bad(
            &["0", "1"],
            vec![discrete.clone(), discrete.clone()],
            vec![0.5, 0.5]
        ),
        ModelError::BadTerminals { .. } | ModelError::BadPartition { .. }
    ));
    assert!(matches!(
        bad(
            &["0", "1"],
            vec![trivial.clone(), discrete.clone()],
            vec![1.0, 0.0]
        ),
        ModelError::NoFullSupport { .. }
    ));
    assert!(matches!(
        bad(
            &["0", "1"],
            vec![trivial.clone(), discrete.clone()],
            vec![0.7, 0.7]
        ),
        ModelError::BadReference(_)
    ));
    assert_eq!(
        bad(
            &["1", "0"],
            vec![trivial.clone(), discrete.clone()],
            vec![0.5, 0.5]
        )
        .code(),
        "BAD_GRID"
    );
    let three = ScenarioModel::new(
        names(3),
        labels(&["0", "1", "2"]),
        vec![
            vec![vec![0, 1, 2]],
            vec![vec![0, 1], vec![2]],
            vec![vec![0], vec![1, 2]],
        ],
        vec![0.2, 0.3, 0.5],
    );
    assert!(three.is_err());
}

#[test]
fn set_construction_errors() {
    let m = two_by_two::model();
    assert_eq!(
        Measure::new(vec![0.5, 0.6, -0.1, 0.0]).unwrap_err().code(),
        "INVALID_MEASURE"
    );
    assert_eq!(
        Measure::new(vec![0.5, 0.6]).unwrap_err().code(),
        "INVALID_MEASURE"
    );
    let empty = RiskSet::from_constraints(
        m.clone(),
        vec![Halfspace::new(vec![1.0, 1.0, 0.0, 0.0], -0.1)],
    );
    assert_eq!(empty.unwrap_err().code(), "EMPTY_SET");
    let a = RiskSet::from_vertices(m.clone(), vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
    let b = RiskSet::from_vertices(m.clone(), vec![vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(a.intersect(&b).unwrap_err().code(), "EMPTY_INTERSECTION");
    let wrong = RiskSet::from_vertices(m.clone(), vec![vec![0.5, 0.5]]);
    assert_eq!(wrong.unwrap_err().code(), "DIMENSION");
    let other = crossed();
    assert_eq!(a.includes(&other).unwrap_err().code(), "MODEL_MISMATCH");
}

#[test]
fn uncharged_atoms_are_reported() {
    let m = two_by_two::model();
    let half = m.stage_named("0+").unwrap();
    let rs = RiskSet::from_vertices(m.clone(), vec![vec![0.5, 0.0, 0.5, 0.0]]).unwrap();
    assert!(!rs.is_relevant());
    let err = rho(&rs, &Claim::constant(4, 1.0), half).unwrap_err();
    assert_eq!(err.code(), "EMPTY_KERNEL");
}

#[test]
fn cone_membership_requires_measurability() {
    let rs = six(0.2);
    let m = rs.model().clone();
    let (root, half) = (m.root(), m.stage_named("0+").unwrap());
    let err = cone_member(&rs, &Claim::new(vec![1.0, 0.0, 0.0, 0.0]), root, half).unwrap_err();
    assert_eq!(err.code(), "NOT_MEASURABLE");
    let y = Claim::new(vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(
        cone_member(&rs, &y, half, root).unwrap_err().code(),
        "INVALID_ARGUMENT"
    );
    let y = m.lift(half, &[0.3, -0.3]);
    assert!(cone_member(&rs, &y, root, half).unwrap());
    let y = m.lift(half, &[0.3, -0.2]);
    assert!(!cone_member(&rs, &y, root, half).unwrap());
}

#[test]
fn financial_and_intermediate_parts_recombine() {
    let pm = two_by_two::product();
    let rs = six(0.2);
    let report = check_fi(&rs, &pm.market).unwrap();
    assert!(report.pass());
    let f = qf(&rs, &pm.market).unwrap();
    let i = qi(&rs, &pm.market).unwrap();
    let full = RiskSet::simplex(rs.model().clone());
    assert!(qi(&f, &pm.market).unwrap().set_equal(&full).unwrap());
    assert!(qf(&i, &pm.market).unwrap().set_equal(&full).unwrap());
}

#[test]
fn split_reserve_on_the_two_by_two_claim() {
    let pm = two_by_two::product();
    let rs = six(0.2);
    let x = Claim::new(vec![1.0, 0.0, -1.0, 0.0]);
    let plan = split_reserve(&rs, &pm.market, &x).unwrap();
    assert!((plan.premium - 0.1).abs() < 1e-12);
    assert!(close(
        plan.financial[0].values(),
        &[0.1, -0.1, 0.1, -0.1],
        1e-12
    ));
    assert!(close(
        plan.intermediate[0].values(),
        &[0.8, 0.0, -1.2, 0.0],
        1e-12
    ));
    assert!(plan.validated && plan.time_consistent);
    assert!(plan.telescoping_error(&x) < 1e-12);
}

#[test]
fn psi_prices_financial_claims_like_pi() {
    let pm = two_by_two::product();
    let m = pm.model().clone();
    let pi = RiskSet::from_vertices(pm.fin.clone(), vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let phi = random_set(&mut rng, &m, 3);
    let q = psi_build(&pm, &pi, &phi).unwrap();
    assert!(is_mstable(&q).unwrap());
    for k in 0..20 {
        let y = random_claim(&mut rng, 2);
        let lifted = pm.lift_financial(&y);
        assert!(pm.is_purely_financial(&lifted));
        let direct = rho(&pi, &y, pm.fin.root()).unwrap()[0];
        let via_q = rho(&q, &lifted, m.root()).unwrap()[0];
        assert!(
            (direct - via_q).abs() < 1e-9,
            "claim {k}: {direct} vs {via_q}"
        );
    }
    // Π extended to the product prices financial claims the same way
    let ext = extend_pi(&pm, &pi).unwrap();
    let y = Claim::new(vec![1.0, -1.0]);
    let r = rho(&ext, &pm.lift_financial(&y), m.root()).unwrap()[0];
    assert!((r - rho(&pi, &y, pm.fin.root()).unwrap()[0]).abs() < 1e-12);
}

#[test]
fn psi_with_the_example_intermediate_set_gives_the_example() {
    let pm = two_by_two::product();
    let eps = 0.2;
    let p_f = RiskSet::singleton(pm.fin.clone(), Measure::new(vec![0.5, 0.5]).unwrap()).unwrap();
    let p_i =
        RiskSet::from_vertices(pm.inter.clone(), vec![vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
    let phi = lift_intermediate(&pm, &p_i).unwrap();
    let q = psi_build(&pm, &p_f, &phi).unwrap();
    assert!(q.set_equal(&six(eps)).unwrap());
}

#[test]
fn strong_check_passes_on_the_example() {
    let v = check_strong(&six(0.2), &[]).unwrap();
    assert!(v.pass && v.analytic && v.sampled);
    assert!(v.witness.is_none());
}

use std::collections::BTreeMap;
use std::sync::Arc;

use mfgc_core::best_response::{
    best_response_flow, feedback_joint_flow, hjb_solve, reward_functional, value_at_initial, FeedbackPolicy,
};
use mfgc_core::fokker_planck::{constant_joint_flow, fp_residual, fp_solve, static_flow, Control, FpGrid, TestFamily};
use mfgc_core::model::{builtin, InitialLaw, ModelSpec};
use mfgc_core::{JointControlFlow, MeasureFlow, MfgError};
use proptest::prelude::*;

fn heat(a: f64, nu: InitialLaw) -> ModelSpec {
    let mut m = ModelSpec::zero("heat", 0.0, 0.0, nu);
    m.a_circ = Arc::new(move |_, _, _, _| a);
    m.theta = a;
    m
}

fn frozen(model: &ModelSpec, grid: &FpGrid, mesh: &Arc<[f64]>, j: usize) -> (MeasureFlow, JointControlFlow) {
    let n = static_flow(model, grid).unwrap();
    let q = constant_joint_flow(&n, mesh, j);
    (n, q)
}

/// Heat flow from `N(0, 0.25)` with `a = 1`; returns the L1 error against
/// `N(0, 0.75)` at the horizon and the maximal weak-form residual.
fn heat_errors(cells: usize, steps: usize) -> (f64, f64) {
    let model = heat(1.0, InitialLaw::Gaussian { mean: 0.0, variance: 0.25 });
    let grid = FpGrid::new(-5.0, 5.0, cells, 0.5, steps).unwrap();
    let mesh = model.control_mesh(1).unwrap();
    let (n0, q0) = frozen(&model, &grid, &mesh, 0);
    let policy = FeedbackPolicy::constant(&grid, 0.0, 0.0, 0.0).unwrap();
    let n = fp_solve(&model, &n0, &q0, Control::Feedback(&policy), &grid).unwrap();
    let exact = InitialLaw::Gaussian { mean: 0.0, variance: 0.75 }.project(&grid.space).unwrap().masses();
    let l1: f64 = n.frame(steps).masses().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
    let q = constant_joint_flow(&n, &mesh, 0);
    let res = fp_residual(&n, &n, &q, &q, &model, TestFamily::V1).unwrap();
    (l1, res.max)
}

#[test]
fn heat_equation_matches_gaussian_kernel() {
    let (l1, coarse) = heat_errors(200, 400);
    assert!(l1 <= 2e-2, "L1 error {l1}");
    let (l1_fine, fine) = heat_errors(400, 1600);
    assert!(l1_fine < l1);
    assert!(coarse / fine >= 1.7, "residual {coarse} -> {fine}");
}

#[test]
fn unstable_step_is_rejected() {
    let model = heat(1.0, InitialLaw::Uniform { lo: -0.5, hi: 0.5 });
    let grid = FpGrid::new(-2.0, 2.0, 80, 0.5, 100).unwrap();
    let mesh = model.control_mesh(1).unwrap();
    let (n, q) = frozen(&model, &grid, &mesh, 0);
    let policy = FeedbackPolicy::constant(&grid, 0.0, 0.0, 0.0).unwrap();
    let err = fp_solve(&model, &n, &q, Control::Feedback(&policy), &grid).unwrap_err();
    assert!(matches!(err, MfgError::Stability { .. }));
}

fn decoupled(gamma: f64) -> ModelSpec {
    builtin("decoupled", &BTreeMap::from([("gamma".to_string(), gamma)])).unwrap()
}

#[test]
fn decoupled_best_response_beats_constant_policies() {
    let model = decoupled(1.0);
    let grid = FpGrid::new(-2.0, 2.0, 120, 0.025, 60).unwrap();
    let mesh = model.control_mesh(33).unwrap();
    let (n, q) = frozen(&model, &grid, &mesh, 16);
    let br = best_response_flow(&model, &n, &q, &grid, &mesh).unwrap();
    let mut best = f64::NEG_INFINITY;
    for j in (0..33).step_by(4) {
        let policy = FeedbackPolicy::constant(&grid, mesh[j], 0.0, 1.0).unwrap();
        let n_u = fp_solve(&model, &n, &q, Control::Feedback(&policy), &grid).unwrap();
        let q_u = feedback_joint_flow(&n_u, &policy, &mesh);
        let value = reward_functional(&n_u, &n, &q_u, &q, &model).unwrap();
        assert!(br.j_star >= value - 1e-12, "constant {} beats the best response", mesh[j]);
        best = best.max(value);
    }
    assert!(br.j_star - best <= 1e-2);
    // The state law does not depend on the control, so the reward is the
    // control cost of the nearest mesh point plus the terminal second moment.
    let u = 10.0 / 32.0;
    let second: f64 = br.n_star.frame(60).integrate(|x| x * x);
    let expected = -0.025 * (u - 0.3f64).powi(2) - second;
    assert!((br.j_star - expected).abs() < 1e-12);
    let continuum = -(1.0 / 12.0 + 0.05 * 0.025);
    assert!((second + continuum).abs() < 1e-3, "second moment {second}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_solve_conserves_mass(j in 0usize..9, beta in -1.0..1.0f64, steps in 20usize..60) {
        let model = builtin("crowd_penalty", &BTreeMap::from([("beta".to_string(), beta)])).unwrap();
        let grid = FpGrid::new(-2.0, 2.0, 60, 0.05, steps).unwrap();
        let mesh = model.control_mesh(9).unwrap();
        let (n, q) = frozen(&model, &grid, &mesh, j);
        let policy = FeedbackPolicy::constant(&grid, mesh[j], -1.0, 1.0).unwrap();
        let flow = fp_solve(&model, &n, &q, Control::Feedback(&policy), &grid).unwrap();
        for d in flow.frames() {
            prop_assert!((d.mass() - 1.0).abs() <= 1e-12);
            prop_assert!(d.values().iter().all(|v| *v >= 0.0));
        }
        let relaxed = constant_joint_flow(&flow, &mesh, j);
        let again = fp_solve(&model, &n, &q, Control::Relaxed(&relaxed), &grid).unwrap();
        prop_assert_eq!(again, flow);
    }

    #[test]
    fn value_equals_forward_reward(j in 0usize..9, kappa in 0.0..2.0f64) {
        let model = builtin("paper_toy", &BTreeMap::from([("kappa".to_string(), kappa)])).unwrap();
        let grid = FpGrid::new(-2.0, 2.0, 60, 0.025, 30).unwrap();
        let mesh = model.control_mesh(9).unwrap();
        let (n, q) = frozen(&model, &grid, &mesh, j);
        let (value, policy) = hjb_solve(&model, &n, &q, &grid, &mesh).unwrap();
        let n_star = fp_solve(&model, &n, &q, Control::Feedback(&policy), &grid).unwrap();
        let q_star = feedback_joint_flow(&n_star, &policy, &mesh);
        let forward = reward_functional(&n_star, &n, &q_star, &q, &model).unwrap();
        let backward = value_at_initial(&model, &value, &grid).unwrap();
        prop_assert!((forward - backward).abs() <= 1e-12 * forward.abs().max(1.0));
        let res = fp_residual(&n_star, &n, &q_star, &q, &model, TestFamily::V1).unwrap();
        prop_assert!(res.max <= 1e-2);
    }
}

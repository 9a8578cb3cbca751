use std::collections::BTreeMap;
use std::sync::Arc;

use mfgc_core::fixed_point::{
    certify, consistency_gap, read_solution, regularity_check, solve_mfg, write_solution, Iteration,
    RegularityConstants, Scheme, SolverOptions,
};
use mfgc_core::fokker_planck::FpGrid;
use mfgc_core::model::{builtin, validate, ModelSpec, ProbePlan};
use mfgc_core::{Flow, GridDensity, MfgError};

fn setup(name: &str, params: &[(&str, f64)]) -> (ModelSpec, FpGrid, Arc<[f64]>) {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let model = builtin(name, &p).unwrap();
    let grid = FpGrid::new(-2.0, 2.0, 120, 0.025, 60).unwrap();
    let mesh = model.control_mesh(33).unwrap();
    (model, grid, mesh)
}

#[test]
fn paper_toy_certificate_is_reproducible() {
    let (model, grid, mesh) = setup("paper_toy", &[]);
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let cert = &sol.certificate;
    assert!(cert.converged && cert.valid, "{cert:?}");
    assert!(cert.epsilon <= 1e-2 && cert.consistency_gap <= 1e-3);
    assert!(cert.iterations <= 200);
    assert_eq!(cert.trace.len(), cert.iterations);
    assert!(sol.q_star.marginal_gap(&sol.n_star) <= 1e-12);

    let again = certify(&model, (&sol.n_star, &sol.q_star), &grid, &mesh, &SolverOptions::default()).unwrap();
    assert_eq!(again.epsilon.to_bits(), cert.epsilon.to_bits());
    assert_eq!(again.consistency_gap.to_bits(), cert.consistency_gap.to_bits());
    assert_eq!(again.fp_residual_max.to_bits(), cert.fp_residual_max.to_bits());

    let probe = ProbePlan::default_for(&model, -2.0, 2.0, 0.025);
    let report = validate(&model, &probe);
    let constants = RegularityConstants::for_model(&model, &report, 0.025);
    assert!(regularity_check(&sol.n_star, &constants).unwrap().passed());

    // A finer control mesh cannot find much more to gain.
    let fine = model.control_mesh(65).unwrap();
    let finer = certify(&model, (&sol.n_star, &sol.q_star), &grid, &fine, &SolverOptions::default()).unwrap();
    assert!(finer.epsilon <= 1e-2, "{finer:?}");
}

#[test]
fn solution_survives_a_round_trip() {
    let (model, grid, mesh) = setup("paper_toy", &[]);
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution");
    write_solution(&path, &sol).unwrap();
    let back = read_solution(&path).unwrap();
    assert_eq!(back.n_star, sol.n_star);
    assert_eq!(back.q_star, sol.q_star);
    assert_eq!(back.certificate, sol.certificate);
    assert_eq!(back.policy.values(), sol.policy.values());
    let missing = read_solution(&dir.path().join("absent")).unwrap_err();
    assert!(matches!(missing, MfgError::MissingInput(_)));
}

#[test]
fn shifted_candidate_has_a_large_gap() {
    let (model, grid, mesh) = setup("paper_toy", &[]);
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let shift = 6;
    let frames: Vec<GridDensity> = sol
        .n_star
        .frames()
        .iter()
        .map(|d| {
            let m = d.masses();
            let mut moved = vec![0.0; m.len()];
            moved[shift..].copy_from_slice(&m[..m.len() - shift]);
            GridDensity::from_masses(grid.space, &moved).unwrap()
        })
        .collect();
    let n = Flow::new(grid.time.clone(), frames).unwrap();
    let q = Flow::new(
        grid.time.clone(),
        sol.q_star.frames().iter().zip(n.frames()).map(|(t, d)| t.repinned(d)).collect(),
    )
    .unwrap();
    let gap = consistency_gap(&model, &n, &q, &grid).unwrap();
    let h = shift as f64 * grid.dx();
    assert!((h - 0.2).abs() < 1e-12);
    assert!(gap >= h - 2.0 * grid.dx(), "gap {gap}");
}

#[test]
fn decoupled_game_is_solved_exactly() {
    let (model, grid, mesh) = setup("decoupled", &[]);
    let opts = SolverOptions { tol: 1e-12, ..SolverOptions::default() };
    let sol = solve_mfg(&model, &grid, &mesh, opts).unwrap();
    assert!(sol.certificate.converged);
    assert!(sol.certificate.epsilon <= 1e-9);
    assert!(sol.policy.values().iter().all(|&u| u == 10.0 / 32.0));
}

#[test]
fn fictitious_play_keeps_the_running_average() {
    let model = builtin("crowd_penalty", &BTreeMap::new()).unwrap();
    let grid = FpGrid::new(-2.0, 2.0, 40, 0.2, 40).unwrap();
    let mesh = model.control_mesh(9).unwrap();
    let mut it = Iteration::new(&model, &grid, mesh, Scheme::FictitiousPlay).unwrap();
    let mut responses = Vec::new();
    for k in 1..=5 {
        responses.push(it.step().unwrap());
        assert_eq!(it.steps_taken(), k);
        assert!(it.joint_flow().marginal_gap(it.state_flow()) <= 1e-12);
        for (t, avg) in it.average().frames().iter().enumerate() {
            for (c, w) in avg.weights().iter().enumerate() {
                let mean = responses.iter().map(|r| r.frame(t).weights()[c]).sum::<f64>() / k as f64;
                assert!((w - mean).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn options_are_checked() {
    let (model, grid, mesh) = setup("paper_toy", &[]);
    for w in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(Iteration::new(&model, &grid, mesh.clone(), Scheme::Damped(w)).is_err());
    }
    let opts = SolverOptions { max_iter: 0, ..SolverOptions::default() };
    assert!(solve_mfg(&model, &grid, &mesh, opts).is_err());
    let opts = SolverOptions { max_iter: 1, ..SolverOptions::default() };
    let sol = solve_mfg(&model, &grid, &mesh, opts).unwrap();
    assert!(!sol.certificate.converged);
    assert_eq!(sol.certificate.iterations, 1);
    let damped = SolverOptions { scheme: Scheme::Damped(0.5), ..SolverOptions::default() };
    assert!(solve_mfg(&model, &grid, &mesh, damped).unwrap().certificate.converged);
}

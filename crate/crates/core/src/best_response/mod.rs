//! Best response of a single agent to a frozen population `(n, q)`.
//!
//! The value function solves the backward dynamic-programming recursion of
//! the same Markov chain that [`crate::fokker_planck::fp_solve`] runs
//! forward:
//!
//! ```text
//! V_L(x_i) = g(x_i, n)
//! V_k(x_i) = max_u [ V_{k+1,i} + Δt (rR(u) ΔV⁺ + rL(u) ΔV⁻ + L°(t_k, x_i, n, u)) ]
//!            + Δt L*(t_k, x_i, n, q_k)
//! ```
//!
//! over a finite control mesh. Because the two recursions are adjoint, the
//! value at `ν` equals the reward of the greedy policy evaluated forward, up
//! to roundoff.

mod policy;

use std::sync::Arc;

use crate::error::{MfgError, Result};
use crate::fokker_planck::{fp_residual, fp_solve, Control, FpGrid, Frozen, ResidualReport, TestFamily};
use crate::measures::{Flow, JointControlFlow, JointTable, MeasureFlow};
use crate::model::{HistoryCache, ModelSpec};

pub use policy::{FeedbackPolicy, ValueGrid};

/// `J(n', n, q', q)`: running reward by the left-endpoint rule plus the
/// terminal reward, all evaluated against the frozen `(n, q)`.
pub fn reward_functional(
    n_prime: &MeasureFlow,
    n: &MeasureFlow,
    q_prime: &JointControlFlow,
    q: &JointControlFlow,
    model: &ModelSpec,
) -> Result<f64> {
    let grid = FpGrid {
        space: *n_prime.cell_grid(),
        time: n_prime.time().clone(),
        boundary: crate::fokker_planck::Boundary::Reflecting,
    };
    grid.check_flow(n_prime, "n'")?;
    grid.check_joint(q_prime, "q'")?;
    let frozen = Frozen::new(model, n, q, &grid)?;
    let times = grid.time.times();
    let centers = &frozen.centers;
    let mut total = 0.0;
    for k in 0..grid.steps() {
        let t = times[k];
        let pi = frozen.history(k);
        let table = q_prime.frame(k);
        let mesh = table.controls();
        let masses = n_prime.frame(k).masses();
        let m = &frozen.joints[k];
        let mut step = 0.0;
        for (i, &x) in centers.iter().enumerate() {
            for (j, &w) in table.row(i).iter().enumerate() {
                if w > 0.0 {
                    step += w * (model.l_circ)(t, x, &pi, mesh[j]);
                }
            }
            if masses[i] > 0.0 {
                step += masses[i] * (model.l_star)(t, x, &pi, m);
            }
        }
        total += grid.time.dt(k) * step;
    }
    let full = frozen.cache.full();
    let terminal: f64 = n_prime
        .frame(grid.steps())
        .masses()
        .iter()
        .zip(centers)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, &x)| w * (model.g)(x, &full))
        .sum();
    let j = total + terminal;
    if !j.is_finite() {
        return Err(MfgError::NonFinite("reward functional"));
    }
    Ok(j)
}

/// Objective maximized at every node of one backward step.
struct NodeProblem<'a> {
    model: &'a ModelSpec,
    frozen: &'a Frozen<'a>,
    mesh: &'a [f64],
}

impl NodeProblem<'_> {
    /// Per-control objectives at `(k, i)` given the next value row, plus the
    /// control-independent term `Δt L*`.
    fn objectives(&self, k: usize, i: usize, next: &[f64], out: &mut Vec<f64>) -> Result<f64> {
        let f = self.frozen;
        let t = f.grid.time.times()[k];
        let dt = f.grid.time.dt(k);
        let pi = f.history(k);
        let x = f.centers[i];
        let v = next[i];
        let up = if i + 1 < next.len() { next[i + 1] - v } else { 0.0 };
        let down = if i > 0 { next[i - 1] - v } else { 0.0 };
        out.clear();
        for &u in self.mesh {
            let (r, l) = f.rates(self.model, &pi, k, i, u);
            f.check_stability(k, r, l)?;
            let val = v + dt * (r * up + l * down + (self.model.l_circ)(t, x, &pi, u));
            if !val.is_finite() {
                return Err(MfgError::NonFinite("value function"));
            }
            out.push(val);
        }
        Ok(dt * (self.model.l_star)(t, x, &pi, &f.joints[k]))
    }
}

/// First index of the largest entry (ties go to the smallest control).
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

fn check_mesh(model: &ModelSpec, mesh: &[f64]) -> Result<()> {
    if mesh.is_empty() {
        return Err(MfgError::InvalidParameter("empty control mesh".into()));
    }
    if mesh.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MfgError::InvalidParameter("control mesh must be strictly increasing".into()));
    }
    if mesh.iter().any(|u| *u < model.u_lo || *u > model.u_hi) {
        return Err(MfgError::OutOfRange(format!(
            "control mesh leaves U = [{}, {}]",
            model.u_lo, model.u_hi
        )));
    }
    Ok(())
}

/// Backward induction against the frozen `(n, q)`; returns the value grid
/// and the greedy feedback policy.
pub fn hjb_solve(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    grid: &FpGrid,
    mesh: &[f64],
) -> Result<(ValueGrid, FeedbackPolicy)> {
    check_mesh(model, mesh)?;
    let frozen = Frozen::new(model, n, q, grid)?;
    let cells = grid.cells();
    let steps = grid.steps();
    let problem = NodeProblem { model, frozen: &frozen, mesh };
    let full = frozen.cache.full();
    let mut values = vec![0.0; (steps + 1) * cells];
    for (i, &x) in frozen.centers.iter().enumerate() {
        values[steps * cells + i] = (model.g)(x, &full);
    }
    if values[steps * cells..].iter().any(|v| !v.is_finite()) {
        return Err(MfgError::NonFinite("terminal reward"));
    }
    let mut controls = vec![0.0; steps * cells];
    let mut scratch = Vec::with_capacity(mesh.len());
    for k in (0..steps).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * cells);
        let next = &tail[..cells];
        let row = &mut head[k * cells..];
        for i in 0..cells {
            let star = problem.objectives(k, i, next, &mut scratch)?;
            let j = argmax(&scratch);
            row[i] = scratch[j] + star;
            controls[k * cells + i] = mesh[j];
        }
    }
    let policy = FeedbackPolicy::new(grid, controls, model.u_lo, model.u_hi)?;
    Ok((ValueGrid::new(grid, values), policy))
}

/// Per-node objectives of step `k` evaluated on `value`'s row `k + 1`:
/// entry `[i][j]` is the maximized expression at cell `i` for control
/// `mesh[j]`, and the second vector holds the added `Δt L*` terms. The value
/// grid produced by [`hjb_solve`] satisfies
/// `V_k(x_i) = max_j obj[i][j] + star[i]` bit-for-bit.
pub fn node_objectives(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    grid: &FpGrid,
    mesh: &[f64],
    value: &ValueGrid,
    k: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let frozen = Frozen::new(model, n, q, grid)?;
    let problem = NodeProblem { model, frozen: &frozen, mesh };
    let next = value.row(k + 1);
    let mut objs = Vec::with_capacity(grid.cells());
    let mut stars = Vec::with_capacity(grid.cells());
    for i in 0..grid.cells() {
        let mut out = Vec::new();
        stars.push(problem.objectives(k, i, next, &mut out)?);
        objs.push(out);
    }
    Ok((objs, stars))
}

/// `δ_{α(t_k, x)}(du) n_k(dx)` for every grid time.
pub fn feedback_joint_flow(n: &MeasureFlow, policy: &FeedbackPolicy, mesh: &Arc<[f64]>) -> JointControlFlow {
    let frames = n
        .frames()
        .iter()
        .enumerate()
        .map(|(k, d)| JointTable::from_feedback(d, mesh.clone(), &policy.mesh_indices(k, mesh)))
        .collect();
    Flow::new(n.time().clone(), frames).expect("one frame per grid time")
}

/// A best response `(n*, q*)` to a frozen pair with its reward.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub n_star: MeasureFlow,
    pub q_star: JointControlFlow,
    pub j_star: f64,
    pub residual: ResidualReport,
    pub policy: FeedbackPolicy,
    pub value: ValueGrid,
}

/// Greedy policy from [`hjb_solve`], run forward with [`fp_solve`].
pub fn best_response_flow(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    grid: &FpGrid,
    mesh: &Arc<[f64]>,
) -> Result<BestResponse> {
    let (value, policy) = hjb_solve(model, n, q, grid, mesh)?;
    let n_star = fp_solve(model, n, q, Control::Feedback(&policy), grid)?;
    let q_star = feedback_joint_flow(&n_star, &policy, mesh);
    let j_star = reward_functional(&n_star, n, &q_star, q, model)?;
    let residual = fp_residual(&n_star, n, &q_star, q, model, TestFamily::V1)?;
    Ok(BestResponse { n_star, q_star, j_star, residual, policy, value })
}

/// `max(0, J* - J(candidate))` against the frozen `(n, q)`.
///
/// The candidate must satisfy the Fokker-Planck identity against `(n, q)` up
/// to `residual_tol`.
pub fn exploitability(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    candidate: (&MeasureFlow, &JointControlFlow),
    grid: &FpGrid,
    mesh: &Arc<[f64]>,
    residual_tol: f64,
) -> Result<f64> {
    let (n_c, q_c) = candidate;
    let residual = fp_residual(n_c, n, q_c, q, model, TestFamily::V1)?;
    if residual.max > residual_tol {
        return Err(MfgError::NotAControlRule { residual: residual.max, tolerance: residual_tol });
    }
    let br = best_response_flow(model, n, q, grid, mesh)?;
    let j = reward_functional(n_c, n, q_c, q, model)?;
    Ok((br.j_star - j).max(0.0))
}

/// Value of the greedy policy at `ν`, `Σ_i ν_i V_0(x_i)`.
pub fn value_at_initial(model: &ModelSpec, value: &ValueGrid, grid: &FpGrid) -> Result<f64> {
    let nu = model.nu.project(&grid.space)?.masses();
    Ok(nu.iter().zip(value.row(0)).map(|(w, v)| w * v).sum())
}

/// Moment cache helper for callers that evaluate coefficients on a flow.
pub fn history_cache(flow: &MeasureFlow) -> HistoryCache<'_> {
    HistoryCache::grid(flow.time().times(), flow.frames())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::fokker_planck::{constant_joint_flow, static_flow};
    use crate::model::builtin;

    fn setup(name: &str, params: &[(&str, f64)]) -> (ModelSpec, FpGrid, Arc<[f64]>, MeasureFlow, JointControlFlow) {
        let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let model = builtin(name, &p).unwrap();
        let grid = FpGrid::new(-2.0, 2.0, 60, 0.025, 20).unwrap();
        let mesh = model.control_mesh(33).unwrap();
        let n = static_flow(&model, &grid).unwrap();
        let q = constant_joint_flow(&n, &mesh, 16);
        (model, grid, mesh, n, q)
    }

    #[test]
    fn decoupled_feedback_is_nearest_mesh_point() {
        let (model, grid, mesh, n, q) = setup("decoupled", &[("gamma", 0.0)]);
        let (value, policy) = hjb_solve(&model, &n, &q, &grid, &mesh).unwrap();
        // Mesh spacing 1/32: 0.3 lies between 9/32 and 10/32, nearer 10/32.
        assert!(policy.values().iter().all(|&u| u == 10.0 / 32.0));
        let running = -(10.0f64 / 32.0 - 0.3).powi(2) * 0.025;
        assert!(value.row(0).iter().all(|v| (v - running).abs() < 1e-15));
    }

    #[test]
    fn value_matches_forward_evaluation() {
        let (model, grid, mesh, n, q) = setup("paper_toy", &[]);
        let br = best_response_flow(&model, &n, &q, &grid, &mesh).unwrap();
        let v0 = value_at_initial(&model, &br.value, &grid).unwrap();
        assert!((v0 - br.j_star).abs() < 1e-12, "{v0} vs {}", br.j_star);
        assert_eq!(br.q_star.marginal_gap(&br.n_star), 0.0);
    }

    #[test]
    fn exploitability_of_best_response_is_zero() {
        let (model, grid, mesh, n, q) = setup("paper_toy", &[]);
        let br = best_response_flow(&model, &n, &q, &grid, &mesh).unwrap();
        let e = exploitability(&model, &n, &q, (&br.n_star, &br.q_star), &grid, &mesh, 1e-2).unwrap();
        assert!(e <= 1e-9);
        let lo = FeedbackPolicy::constant(&grid, 0.0, 0.0, 1.0).unwrap();
        let n_lo = fp_solve(&model, &n, &q, Control::Feedback(&lo), &grid).unwrap();
        let q_lo = feedback_joint_flow(&n_lo, &lo, &mesh);
        let e_lo = exploitability(&model, &n, &q, (&n_lo, &q_lo), &grid, &mesh, 1e-2).unwrap();
        assert!(e_lo > 0.0);
    }

    #[test]
    fn greedy_attains_node_maximum() {
        let (model, grid, mesh, n, q) = setup("paper_toy", &[]);
        let (value, policy) = hjb_solve(&model, &n, &q, &grid, &mesh).unwrap();
        for k in [0, 7, 19] {
            let (objs, stars) = node_objectives(&model, &n, &q, &grid, &mesh, &value, k).unwrap();
            for i in 0..grid.cells() {
                let j = argmax(&objs[i]);
                assert_eq!(objs[i][j] + stars[i], value.value(k, i));
                assert_eq!(mesh[j], policy.value(k, i));
            }
        }
    }
}

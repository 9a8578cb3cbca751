//! Equilibrium search by fictitious play, with an a posteriori certificate.
//!
//! Each iteration computes the best response to the current pair `(n, q)`,
//! averages its joint flow into the running relaxed control, and evolves the
//! state flow under the averaged control. The joint flow is then re-pinned
//! onto the new state flow so that every iterate is a control rule. Every
//! iterate is scored by its exploitability `ε` and its consistency gap; the
//! best one is returned together with its certificate.

mod persist;
mod regularity;

use std::sync::Arc;

use crate::best_response::{best_response_flow, reward_functional, FeedbackPolicy};
use crate::error::{MfgError, Result};
use crate::fokker_planck::{
    constant_joint_flow, fp_residual, fp_solve, static_flow, Control, FpGrid, TestFamily,
};
use crate::measures::{
    wasserstein_1d, wasserstein_product, Flow, JointControlFlow, MeasureFlow, ProductOptions,
};
use crate::model::ModelSpec;

pub use persist::{read_solution, write_solution};
pub use regularity::{regularity_check, RegularityConstants, RegularityReport};

/// Averaging rule for the running relaxed control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Weight `1 / (k + 1)` on the `k`-th best response.
    FictitiousPlay,
    /// Fixed weight `w` in `(0, 1]`.
    Damped(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub scheme: Scheme,
    /// Stop once `ε + consistency gap` falls to this level.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest Fokker-Planck residual for which a certificate is valid.
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { scheme: Scheme::FictitiousPlay, tol: 1e-4, max_iter: 200, residual_tol: 1e-2 }
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub gap: f64,
    pub epsilon: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    /// Exploitability against the candidate's own flows.
    pub epsilon: f64,
    /// `sup_t W_p(n'_t, n_t) + Σ Δt W_p(q'_t, q_t)` between the candidate and
    /// its evolution under its own relaxed control.
    pub consistency_gap: f64,
    pub fp_residual_max: f64,
    pub residual_tol: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    /// The search met its tolerance.
    pub converged: bool,
    /// The candidate is a control rule up to `residual_tol`.
    pub valid: bool,
}

impl EquilibriumCertificate {
    /// `ε + consistency gap`, the quantity the solver minimizes.
    pub fn score(&self) -> f64 {
        self.epsilon + self.consistency_gap
    }
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub n_star: MeasureFlow,
    pub q_star: JointControlFlow,
    pub certificate: EquilibriumCertificate,
    /// Best-response feedback against `(n_star, q_star)`.
    pub policy: FeedbackPolicy,
}

/// Everything measured about one candidate pair.
struct Assessment {
    epsilon: f64,
    gap: f64,
    residual: f64,
    policy: FeedbackPolicy,
}

fn assess(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    grid: &FpGrid,
    mesh: &Arc<[f64]>,
) -> Result<(Assessment, JointControlFlow)> {
    let residual = fp_residual(n, n, q, q, model, TestFamily::V1)?.max;
    let br = best_response_flow(model, n, q, grid, mesh)?;
    let own = reward_functional(n, n, q, q, model)?;
    let epsilon = (br.j_star - own).max(0.0);
    let gap = consistency_gap(model, n, q, grid)?;
    Ok((Assessment { epsilon, gap, residual, policy: br.policy }, br.q_star))
}

/// Distance between `(n, q)` and the pair obtained by evolving `ν` under
/// `q`'s relaxed control against the frozen `(n, q)`.
pub fn consistency_gap(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    grid: &FpGrid,
) -> Result<f64> {
    let evolved = fp_solve(model, n, q, Control::Relaxed(q), grid)?;
    let repinned = repin(q, &evolved);
    let mut state: f64 = 0.0;
    for (a, b) in evolved.frames().iter().zip(n.frames()) {
        state = state.max(wasserstein_1d(a, b, model.p)?);
    }
    let mut joint = 0.0;
    for k in 0..grid.steps() {
        let d = wasserstein_product(
            &repinned.frame(k).to_joint_measure(),
            &q.frame(k).to_joint_measure(),
            model.p,
            ProductOptions::bound(),
        )?;
        joint += grid.time.dt(k) * d.value;
    }
    Ok(state + joint)
}

fn repin(q: &JointControlFlow, n: &MeasureFlow) -> JointControlFlow {
    let frames = q.frames().iter().zip(n.frames()).map(|(t, d)| t.repinned(d)).collect();
    Flow::new(q.time().clone(), frames).expect("frames share the time grid")
}

fn mix(a: &JointControlFlow, b: &JointControlFlow, w: f64) -> Result<JointControlFlow> {
    let frames = a
        .frames()
        .iter()
        .zip(b.frames())
        .map(|(x, y)| x.mix(y, w))
        .collect::<Result<Vec<_>>>()?;
    Flow::new(a.time().clone(), frames)
}

/// Mesh index closest to the middle of `U` (ties go to the smaller control).
fn midpoint_index(model: &ModelSpec, mesh: &[f64]) -> usize {
    let mid = 0.5 * (model.u_lo + model.u_hi);
    let mut best = 0;
    for (j, u) in mesh.iter().enumerate() {
        if (u - mid).abs() < (mesh[best] - mid).abs() {
            best = j;
        }
    }
    best
}

/// Running state of the fictitious-play iteration.
///
/// Exposed so that callers can inspect the averaged control between steps.
pub struct Iteration<'a> {
    model: &'a ModelSpec,
    grid: &'a FpGrid,
    mesh: Arc<[f64]>,
    scheme: Scheme,
    /// Current state flow.
    n: MeasureFlow,
    /// Averaged control re-pinned onto `n`.
    q: JointControlFlow,
    /// Plain average of the best responses (not re-pinned).
    average: JointControlFlow,
    k: usize,
}

impl<'a> Iteration<'a> {
    /// Starts from `ν` evolved under the midpoint control.
    pub fn new(model: &'a ModelSpec, grid: &'a FpGrid, mesh: Arc<[f64]>, scheme: Scheme) -> Result<Self> {
        if let Scheme::Damped(w) = scheme {
            if !(w > 0.0 && w <= 1.0) {
                return Err(MfgError::InvalidParameter(format!("damping weight must lie in (0, 1], got {w}")));
            }
        }
        let j = midpoint_index(model, &mesh);
        let frozen = static_flow(model, grid)?;
        let frozen_q = constant_joint_flow(&frozen, &mesh, j);
        let policy = FeedbackPolicy::constant(grid, mesh[j], model.u_lo, model.u_hi)?;
        let n = fp_solve(model, &frozen, &frozen_q, Control::Feedback(&policy), grid)?;
        let q = constant_joint_flow(&n, &mesh, j);
        Ok(Self { model, grid, mesh, scheme, average: q.clone(), n, q, k: 0 })
    }

    pub fn state_flow(&self) -> &MeasureFlow {
        &self.n
    }

    pub fn joint_flow(&self) -> &JointControlFlow {
        &self.q
    }

    /// Weighted average of the best responses so far.
    pub fn average(&self) -> &JointControlFlow {
        &self.average
    }

    /// Number of best responses absorbed so far.
    pub fn steps_taken(&self) -> usize {
        self.k
    }

    /// Averaging weight applied at the next step.
    fn weight(&self) -> f64 {
        match self.scheme {
            Scheme::FictitiousPlay => 1.0 / (self.k + 1) as f64,
            Scheme::Damped(w) => w,
        }
    }

    /// Absorbs `best_response` into the average and evolves the state flow.
    fn advance(&mut self, best_response: &JointControlFlow) -> Result<()> {
        let average = mix(&self.average, best_response, self.weight())?;
        let n = fp_solve(self.model, &self.n, &average, Control::Relaxed(&average), self.grid)?;
        self.q = repin(&average, &n);
        self.n = n;
        self.average = average;
        self.k += 1;
        Ok(())
    }

    /// One best response plus one averaging step; returns the best response
    /// joint flow that was absorbed.
    pub fn step(&mut self) -> Result<JointControlFlow> {
        let br = best_response_flow(self.model, &self.n, &self.q, self.grid, &self.mesh)?;
        self.advance(&br.q_star)?;
        Ok(br.q_star)
    }
}

/// Searches for an approximate equilibrium and certifies the best iterate.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged = false`.
pub fn solve_mfg(
    model: &ModelSpec,
    grid: &FpGrid,
    mesh: &Arc<[f64]>,
    opts: SolverOptions,
) -> Result<MfgSolution> {
    if opts.max_iter == 0 {
        return Err(MfgError::InvalidParameter("max_iter must be at least 1".into()));
    }
    let mut it = Iteration::new(model, grid, mesh.clone(), opts.scheme)?;
    let mut trace = Vec::new();
    let mut best: Option<(f64, MeasureFlow, JointControlFlow, Assessment)> = None;
    for iter in 0..opts.max_iter {
        let (a, best_response) = assess(model, &it.n, &it.q, grid, mesh)?;
        trace.push(TraceRow { iter, gap: a.gap, epsilon: a.epsilon, residual: a.residual });
        let score = a.epsilon + a.gap;
        let done = score <= opts.tol;
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, it.n.clone(), it.q.clone(), a));
        }
        if done || iter + 1 == opts.max_iter {
            break;
        }
        it.advance(&best_response)?;
    }
    let (_, n_star, q_star, a) = best.expect("at least one iterate");
    let certificate = certificate(&a, &opts, trace);
    Ok(MfgSolution { n_star, q_star, certificate, policy: a.policy })
}

fn certificate(a: &Assessment, opts: &SolverOptions, trace: Vec<TraceRow>) -> EquilibriumCertificate {
    EquilibriumCertificate {
        epsilon: a.epsilon,
        consistency_gap: a.gap,
        fp_residual_max: a.residual,
        residual_tol: opts.residual_tol,
        iterations: trace.len(),
        trace,
        converged: a.epsilon + a.gap <= opts.tol,
        valid: a.residual <= opts.residual_tol,
    }
}

/// Re-evaluates a candidate pair from scratch.
///
/// `converged` compares `ε + gap` with `opts.tol`; the trace is empty.
pub fn certify(
    model: &ModelSpec,
    candidate: (&MeasureFlow, &JointControlFlow),
    grid: &FpGrid,
    mesh: &Arc<[f64]>,
    opts: &SolverOptions,
) -> Result<EquilibriumCertificate> {
    let (n, q) = candidate;
    let (a, _) = assess(model, n, q, grid, mesh)?;
    Ok(certificate(&a, opts, Vec::new()))
}

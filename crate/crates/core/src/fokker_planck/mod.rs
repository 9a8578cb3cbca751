//! Controlled Fokker-Planck solver.
//!
//! The state law is advanced by the explicit Markov-chain approximation of
//! the generator on a cell-centred grid: from cell `i` mass jumps right at
//! rate `rR = a/(2Δx²) + b⁺/Δx` and left at rate `rL = a/(2Δx²) + b⁻/Δx`
//! (central second difference, upwinded first difference). The outermost
//! cells have no outward rate, which makes the boundary reflecting and the
//! scheme exactly mass-conservative. The dynamic-programming solver in
//! [`crate::best_response`] uses the same rates, so the two are discrete
//! adjoints of each other.

mod mollify;
mod residual;

use std::sync::Arc;

use crate::best_response::FeedbackPolicy;
use crate::error::{MfgError, Result};
use crate::measures::{
    CellGrid, Flow, GridDensity, JointControlFlow, JointMeasure, JointTable, MeasureFlow, TimeGrid,
};
use crate::model::{FlowHistory, HistoryCache, ModelSpec};

pub use mollify::{mollified_coefficient, mollified_diffusion, mollifier};
pub use residual::{fp_residual, ResidualReport, TestFamily};

/// Relative slack on the stability bound, absorbing roundoff in `Δt`.
const STABILITY_SLACK: f64 = 1e-9;

/// Boundary treatment of the truncated state interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Reflecting,
}

/// Space-time grid of the explicit scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct FpGrid {
    pub space: CellGrid,
    pub time: TimeGrid,
    pub boundary: Boundary,
}

impl FpGrid {
    pub fn new(x_lo: f64, x_hi: f64, cells: usize, horizon: f64, steps: usize) -> Result<Self> {
        if cells < 3 {
            return Err(MfgError::InvalidGrid(format!("need at least 3 cells, got {cells}")));
        }
        Ok(Self {
            space: CellGrid::new(x_lo, x_hi, cells)?,
            time: TimeGrid::uniform(horizon, steps)?,
            boundary: Boundary::Reflecting,
        })
    }

    pub fn cells(&self) -> usize {
        self.space.cells
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn dx(&self) -> f64 {
        self.space.dx()
    }

    /// Largest stable `Δt` for diffusion `a_max` and drift `b_max`.
    pub fn max_stable_dt(&self, a_max: f64, b_max: f64) -> f64 {
        let dx = self.dx();
        0.5 / (a_max / (dx * dx) + b_max / dx)
    }

    pub(crate) fn check_flow(&self, flow: &MeasureFlow, what: &str) -> Result<()> {
        if !flow.time().same_as(&self.time) {
            return Err(MfgError::GridMismatch(format!("{what}: time grid differs from the solver grid")));
        }
        if flow.frames().iter().any(|f| !f.grid().same_as(&self.space)) {
            return Err(MfgError::GridMismatch(format!("{what}: spatial grid differs from the solver grid")));
        }
        Ok(())
    }

    pub(crate) fn check_joint(&self, flow: &JointControlFlow, what: &str) -> Result<()> {
        if !flow.time().same_as(&self.time) {
            return Err(MfgError::GridMismatch(format!("{what}: time grid differs from the solver grid")));
        }
        if flow.frames().iter().any(|f| !f.grid().same_as(&self.space)) {
            return Err(MfgError::GridMismatch(format!("{what}: spatial grid differs from the solver grid")));
        }
        Ok(())
    }
}

/// Control driving the forward equation.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    /// Pure feedback `u = α(t_k, x_i)`.
    Feedback(&'a FeedbackPolicy),
    /// Relaxed control: per cell, rates are averaged under the conditional
    /// control law of the joint frame.
    Relaxed(&'a JointControlFlow),
}

/// Frozen pair `(n, q)` evaluated once per time step: the flow history fed to
/// the coefficients and the population terms `b*`, `a*`.
pub(crate) struct Frozen<'a> {
    pub grid: &'a FpGrid,
    pub cache: HistoryCache<'a>,
    pub joints: Vec<JointMeasure>,
    pub b_star: Vec<f64>,
    pub a_star: Vec<f64>,
    pub centers: Vec<f64>,
}

impl<'a> Frozen<'a> {
    pub fn new(
        model: &ModelSpec,
        n: &'a MeasureFlow,
        q: &JointControlFlow,
        grid: &'a FpGrid,
    ) -> Result<Self> {
        grid.check_flow(n, "frozen state flow")?;
        grid.check_joint(q, "frozen joint flow")?;
        let cache = HistoryCache::grid(grid.time.times(), n.frames());
        let joints = q.joint_measures();
        let mut b_star = Vec::with_capacity(joints.len());
        let mut a_star = Vec::with_capacity(joints.len());
        for (k, m) in joints.iter().enumerate() {
            let t = grid.time.times()[k];
            let pi = cache.upto(k);
            let b = (model.b_star)(t, &pi, m);
            let a = (model.a_star)(t, &pi, m);
            if !b.is_finite() || !a.is_finite() {
                return Err(MfgError::NonFinite("population drift or diffusion"));
            }
            b_star.push(b);
            a_star.push(a);
        }
        Ok(Self { grid, cache, joints, b_star, a_star, centers: grid.space.centers() })
    }

    pub fn history(&self, k: usize) -> FlowHistory<'_> {
        self.cache.upto(k)
    }

    /// Jump rates `(rR, rL)` out of cell `i` at step `k` under control `u`.
    pub fn rates(&self, model: &ModelSpec, pi: &FlowHistory, k: usize, i: usize, u: f64) -> (f64, f64) {
        let t = self.grid.time.times()[k];
        let x = self.centers[i];
        let b = (model.b_circ)(t, x, pi, u) + self.b_star[k];
        let a = ((model.a_circ)(t, x, pi, u) + self.a_star[k]).max(0.0);
        let dx = self.grid.dx();
        let diff = 0.5 * a / (dx * dx);
        let mut r_right = diff + b.max(0.0) / dx;
        let mut r_left = diff + (-b).max(0.0) / dx;
        if i == 0 {
            r_left = 0.0;
        }
        if i + 1 == self.centers.len() {
            r_right = 0.0;
        }
        (r_right, r_left)
    }

    pub fn check_stability(&self, k: usize, r_right: f64, r_left: f64) -> Result<()> {
        let ratio = self.grid.time.dt(k) * (r_right + r_left);
        if !ratio.is_finite() {
            return Err(MfgError::NonFinite("jump rates"));
        }
        if ratio > 0.5 * (1.0 + STABILITY_SLACK) {
            return Err(MfgError::Stability { ratio });
        }
        Ok(())
    }
}

/// One explicit step of the forward equation on cell masses.
pub(crate) fn forward_step(masses: &[f64], rates: &[(f64, f64)], dt: f64) -> Vec<f64> {
    let cells = masses.len();
    let mut next = vec![0.0; cells];
    for i in 0..cells {
        let (r, l) = rates[i];
        let out_r = dt * r * masses[i];
        let out_l = dt * l * masses[i];
        next[i] += masses[i] - out_r - out_l;
        if i + 1 < cells {
            next[i + 1] += out_r;
        }
        if i > 0 {
            next[i - 1] += out_l;
        }
    }
    next
}

/// Solves the forward equation driven by `control` against the frozen pair
/// `(n, q)`, starting from `ν` projected onto the grid.
pub fn fp_solve(
    model: &ModelSpec,
    n: &MeasureFlow,
    q: &JointControlFlow,
    control: Control,
    grid: &FpGrid,
) -> Result<MeasureFlow> {
    let frozen = Frozen::new(model, n, q, grid)?;
    let cells = grid.cells();
    let steps = grid.steps();
    let conditional: Option<Vec<Vec<Vec<f64>>>> = match control {
        Control::Feedback(policy) => {
            policy.check_grid(grid)?;
            None
        }
        Control::Relaxed(flow) => {
            grid.check_joint(flow, "relaxed control")?;
            Some(flow.frames()[..steps].iter().map(JointTable::conditional_laws).collect())
        }
    };
    let mut masses = model.nu.project(&grid.space)?.masses();
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(density(grid, &masses));
    let mut rates = vec![(0.0, 0.0); cells];
    for k in 0..steps {
        let pi = frozen.history(k);
        for (i, slot) in rates.iter_mut().enumerate() {
            *slot = match (&control, &conditional) {
                (Control::Feedback(policy), _) => frozen.rates(model, &pi, k, i, policy.value(k, i)),
                (Control::Relaxed(flow), Some(laws)) => {
                    let mesh = flow.frame(k).controls();
                    let mut acc = (0.0, 0.0);
                    for (j, &w) in laws[k][i].iter().enumerate() {
                        if w > 0.0 {
                            let (r, l) = frozen.rates(model, &pi, k, i, mesh[j]);
                            acc.0 += w * r;
                            acc.1 += w * l;
                        }
                    }
                    acc
                }
                _ => unreachable!("conditional laws exist for relaxed controls"),
            };
            frozen.check_stability(k, slot.0, slot.1)?;
        }
        masses = forward_step(&masses, &rates, grid.time.dt(k));
        clip_negative(&mut masses);
        frames.push(density(grid, &masses));
    }
    Flow::new(grid.time.clone(), frames)
}

fn clip_negative(masses: &mut [f64]) {
    for m in masses.iter_mut() {
        if *m < 0.0 {
            debug_assert!(*m >= -1e-12, "explicit step produced mass {m}");
            *m = 0.0;
        }
    }
}

fn density(grid: &FpGrid, masses: &[f64]) -> GridDensity {
    let dx = grid.dx();
    GridDensity::from_values_unchecked(grid.space, masses.iter().map(|m| m / dx).collect())
}

/// State flow constant in time, equal to `ν` projected onto the grid.
pub fn static_flow(model: &ModelSpec, grid: &FpGrid) -> Result<MeasureFlow> {
    let nu = model.nu.project(&grid.space)?;
    Flow::new(grid.time.clone(), vec![nu; grid.steps() + 1])
}

/// Joint flow `δ_{u}(du) n_t(dx)` for a constant control `u` on `mesh`.
pub fn constant_joint_flow(n: &MeasureFlow, mesh: &Arc<[f64]>, u_index: usize) -> JointControlFlow {
    let cells = n.cell_grid().cells;
    n.map(|d| JointTable::from_feedback(d, mesh.clone(), &vec![u_index; cells]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialLaw;

    fn heat_model(a: f64, nu: InitialLaw) -> ModelSpec {
        let mut m = ModelSpec::zero("heat", 0.0, 0.0, nu);
        m.a_circ = Arc::new(move |_, _, _, _| a);
        m.theta = a;
        m
    }

    fn solve_heat(model: &ModelSpec, grid: &FpGrid) -> Result<MeasureFlow> {
        let n = static_flow(model, grid)?;
        let mesh = model.control_mesh(1)?;
        let q = constant_joint_flow(&n, &mesh, 0);
        let policy = FeedbackPolicy::constant(grid, 0.0, 0.0, 0.0)?;
        fp_solve(model, &n, &q, Control::Feedback(&policy), grid)
    }

    #[test]
    fn mass_conserved_and_symmetric() {
        let model = heat_model(0.3, InitialLaw::Uniform { lo: -0.5, hi: 0.5 });
        let grid = FpGrid::new(-2.0, 2.0, 40, 0.5, 200).unwrap();
        let flow = solve_heat(&model, &grid).unwrap();
        for f in flow.frames() {
            assert!((f.mass() - 1.0).abs() < 1e-12);
            let v = f.values();
            for i in 0..v.len() {
                assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stability_violation_is_refused() {
        let model = heat_model(1.0, InitialLaw::Uniform { lo: -0.5, hi: 0.5 });
        let grid = FpGrid::new(-2.0, 2.0, 40, 0.5, 10).unwrap();
        assert!(matches!(solve_heat(&model, &grid), Err(MfgError::Stability { .. })));
    }

    #[test]
    fn truncated_initial_law_is_refused() {
        let model = heat_model(0.1, InitialLaw::Gaussian { mean: 0.0, variance: 1.0 });
        let grid = FpGrid::new(-1.0, 1.0, 20, 0.1, 100).unwrap();
        assert!(matches!(solve_heat(&model, &grid), Err(MfgError::Truncation(_))));
    }

    #[test]
    fn variance_grows_by_a_t() {
        let model = heat_model(0.5, InitialLaw::Uniform { lo: -0.5, hi: 0.5 });
        let grid = FpGrid::new(-4.0, 4.0, 160, 0.2, 400).unwrap();
        let flow = solve_heat(&model, &grid).unwrap();
        let v0 = crate::model::Moments::of(flow.frame(0)).variance;
        let v1 = crate::model::Moments::of(flow.frame(400)).variance;
        // The discrete generator reproduces the second moment exactly away
        // from the boundary.
        assert!((v1 - v0 - 0.5 * 0.2).abs() < 1e-9, "{v0} {v1}");
    }
}

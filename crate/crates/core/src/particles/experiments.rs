use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use super::simulate::{estimate_reward, simulate_frozen, simulate_profile, Profile, SimulationRun};
use super::stats::{log_log_slope, MannKendall, Quartiles, Summary};
use crate::best_response::{feedback_joint_flow, hjb_solve, FeedbackPolicy};
use crate::error::{MfgError, Result};
use crate::fixed_point::MfgSolution;
use crate::fokker_planck::{fp_solve, Boundary, Control, FpGrid};
use crate::measures::{
    cic, wasserstein_1d, wasserstein_product, Flow, GridDensity, JointMeasure, JointTable, MeasureFlow,
    ProductOptions,
};
use crate::model::ModelSpec;

/// Fewest repetitions accepted by the experiments.
pub const MIN_REPETITIONS: usize = 50;

/// Repetition counter for population size `n`; distinct sizes never share
/// noise.
fn repetition_id(n: usize, r: usize) -> u64 {
    ((n as u64) << 32) | r as u64
}

fn check_repetitions(repetitions: usize) -> Result<()> {
    if repetitions < MIN_REPETITIONS {
        return Err(MfgError::InsufficientRepetitions(format!(
            "{repetitions} repetitions, at least {MIN_REPETITIONS} are needed"
        )));
    }
    Ok(())
}

fn check_sizes(n_list: &[usize], min_len: usize) -> Result<()> {
    if n_list.len() < min_len {
        return Err(MfgError::InvalidParameter(format!("need at least {min_len} population sizes")));
    }
    if n_list.contains(&0) {
        return Err(MfgError::InvalidParameter("population sizes must be positive".into()));
    }
    Ok(())
}

/// Results for one population size of [`deviation_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub n: usize,
    /// `sup_t W_p(undeviated flow, deviated flow)^p`.
    pub flow_gap: Summary,
    /// `sup_t |Z - X|^p` for the deviating player.
    pub proxy_gap: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationStats {
    pub p: f64,
    pub repetitions: usize,
    pub rows: Vec<DeviationRow>,
    /// Log-log slope of the mean flow gap against `N`; `None` when some mean
    /// is zero.
    pub flow_slope: Option<f64>,
    pub proxy_slope: Option<f64>,
    /// Trend test on `N · mean proxy gap`.
    pub scaled_proxy_trend: MannKendall,
}

impl DeviationStats {
    pub fn to_csv(&self) -> String {
        let p = self.p;
        let mut s = format!(
            "# N,mean_gap[W{p}^{p} state],ci_lo,ci_hi,proxy_mean[|Z-X|^{p}],proxy_ci_lo,proxy_ci_hi,N_times_proxy\n"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.flow_gap.mean,
                r.flow_gap.ci_lo,
                r.flow_gap.ci_hi,
                r.proxy_gap.mean,
                r.proxy_gap.ci_lo,
                r.proxy_gap.ci_hi,
                r.n as f64 * r.proxy_gap.mean
            );
        }
        s
    }
}

/// Effect of replacing player 0's policy, measured with common random
/// numbers for each population size in `n_list`.
///
/// Per repetition: the symmetric profile, the profile where player 0 plays
/// `deviation`, and the replay of player 0 under `deviation` against the
/// symmetric profile's flows.
pub fn deviation_experiment(
    model: &ModelSpec,
    policy: &FeedbackPolicy,
    deviation: &FeedbackPolicy,
    n_list: &[usize],
    repetitions: usize,
    base_seed: u64,
) -> Result<DeviationStats> {
    check_sizes(n_list, 2)?;
    check_repetitions(repetitions)?;
    let time = policy.time().clone();
    let p = model.p;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let samples: Vec<(f64, f64)> = (0..repetitions)
            .into_par_iter()
            .map(|r| {
                let rep = repetition_id(n, r);
                let base = simulate_profile(model, &Profile::Symmetric(policy), n, base_seed, rep, &time)?;
                let dev = Profile::Deviation { base: policy, player: 0, policy: deviation };
                let moved = simulate_profile(model, &dev, n, base_seed, rep, &time)?;
                let mut flow_gap: f64 = 0.0;
                for (a, b) in base.state_flow.frames().iter().zip(moved.state_flow.frames()) {
                    flow_gap = flow_gap.max(wasserstein_1d(a, b, p)?.powf(p));
                }
                let (z, _) = simulate_frozen(model, deviation, &base, 0)?;
                let proxy = z
                    .iter()
                    .zip(&moved.states)
                    .map(|(z, row)| (z - row[0]).abs().powf(p))
                    .fold(0.0, f64::max);
                Ok((flow_gap, proxy))
            })
            .collect::<Result<_>>()?;
        let flows: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let proxies: Vec<f64> = samples.iter().map(|s| s.1).collect();
        rows.push(DeviationRow { n, flow_gap: Summary::of(&flows)?, proxy_gap: Summary::of(&proxies)? });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let flow_means: Vec<f64> = rows.iter().map(|r| r.flow_gap.mean).collect();
    let proxy_means: Vec<f64> = rows.iter().map(|r| r.proxy_gap.mean).collect();
    let scaled: Vec<f64> = rows.iter().map(|r| r.n as f64 * r.proxy_gap.mean).collect();
    Ok(DeviationStats {
        p,
        repetitions,
        flow_slope: log_log_slope(&ns, &flow_means),
        proxy_slope: log_log_slope(&ns, &proxy_means),
        scaled_proxy_trend: MannKendall::of(&scaled),
        rows,
    })
}

/// Solver grid and control mesh a solution was computed on.
fn solution_grid(sol: &MfgSolution) -> (FpGrid, Arc<[f64]>) {
    let grid = FpGrid {
        space: *sol.n_star.cell_grid(),
        time: sol.n_star.time().clone(),
        boundary: Boundary::Reflecting,
    };
    (grid, sol.q_star.frame(0).controls().clone())
}

/// Finite-population exploitability estimate for player 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NashEstimate {
    pub n: usize,
    /// `max(0, mean(J_deviation - J_symmetric))` over paired repetitions.
    pub eps_hat: f64,
    /// Standard error of the paired mean difference.
    pub stderr: f64,
    pub symmetric: Summary,
    pub deviation: Summary,
    /// Order `1/N` of the error made by optimizing against frozen flows.
    pub proxy_order: f64,
}

impl NashEstimate {
    /// `eps_hat ≤ certified ε + 2 stderr + slack`.
    pub fn within(&self, certified: f64, slack: f64) -> bool {
        self.eps_hat <= certified + 2.0 * self.stderr + slack
    }
}

pub fn nash_csv(rows: &[NashEstimate]) -> String {
    let mut s = String::from("# N,eps_hat[reward],stderr[reward],J_symmetric,J_deviation,proxy_order[1/N]\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.n, r.eps_hat, r.stderr, r.symmetric.mean, r.deviation.mean, r.proxy_order
        );
    }
    s
}

/// Running sums of deposited state and joint flows.
struct Deposits {
    states: Vec<Vec<f64>>,
    joints: Vec<Vec<f64>>,
}

impl Deposits {
    fn new(grid: &FpGrid, controls: usize) -> Self {
        let frames = grid.steps() + 1;
        Self {
            states: vec![vec![0.0; grid.cells()]; frames],
            joints: vec![vec![0.0; grid.cells() * controls]; frames],
        }
    }

    fn add_run(&mut self, run: &SimulationRun, grid: &FpGrid, mesh: &[f64]) {
        let k = mesh.len();
        for (t, m) in run.joint_flow.frames().iter().enumerate() {
            for a in m.atoms() {
                let j = nearest(mesh, a.u);
                for (i, f) in cic(a.x, &grid.space) {
                    self.states[t][i] += a.w * f;
                    self.joints[t][i * k + j] += a.w * f;
                }
            }
        }
    }

    fn add(&mut self, other: &Deposits) {
        for (a, b) in self.states.iter_mut().zip(&other.states) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.joints.iter_mut().zip(&other.joints) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Mean flows after `runs` runs.
    fn into_flows(self, runs: usize, grid: &FpGrid, mesh: &Arc<[f64]>) -> Result<(MeasureFlow, Flow<JointTable>)> {
        let scale = 1.0 / runs as f64;
        let n = self
            .states
            .iter()
            .map(|m| GridDensity::from_masses(grid.space, &m.iter().map(|w| w * scale).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let q = self
            .joints
            .into_iter()
            .map(|w| JointTable::new(grid.space, mesh.clone(), w.into_iter().map(|x| x * scale).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok((Flow::new(grid.time.clone(), n)?, Flow::new(grid.time.clone(), q)?))
    }
}

/// Repetitions are split into this many contiguous chunks; the split does
/// not depend on the thread count, so sums are reproducible.
const CHUNKS: usize = 16;

fn nearest(mesh: &[f64], u: f64) -> usize {
    let j = mesh.partition_point(|m| *m < u);
    if j == 0 {
        0
    } else if j == mesh.len() || u - mesh[j - 1] <= mesh[j] - u {
        j - 1
    } else {
        j
    }
}

/// Exploitability of the MFG policy in the `N`-player game.
///
/// The deviation is the best response against the mean empirical flows of
/// the symmetric profile (deposited on the solver grid), simulated with the
/// same noise as the symmetric runs.
pub fn nash_gap(
    model: &ModelSpec,
    sol: &MfgSolution,
    n: usize,
    repetitions: usize,
    seed: u64,
) -> Result<NashEstimate> {
    check_sizes(&[n], 1)?;
    check_repetitions(repetitions)?;
    let (grid, mesh) = solution_grid(sol);
    let time = grid.time.clone();
    let policy = &sol.policy;
    let chunk = repetitions.div_ceil(CHUNKS);
    let parts: Vec<(Vec<f64>, Deposits)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rewards = Vec::new();
            let mut dep = Deposits::new(&grid, mesh.len());
            for r in c * chunk..((c + 1) * chunk).min(repetitions) {
                let run = simulate_profile(model, &Profile::Symmetric(policy), n, seed, repetition_id(n, r), &time)?;
                rewards.push(estimate_reward(model, &run, 0)?);
                dep.add_run(&run, &grid, &mesh);
            }
            Ok((rewards, dep))
        })
        .collect::<Result<_>>()?;
    let mut total = Deposits::new(&grid, mesh.len());
    let mut sym = Vec::with_capacity(repetitions);
    for (rewards, dep) in &parts {
        sym.extend_from_slice(rewards);
        total.add(dep);
    }
    drop(parts);
    let (n_emp, q_emp) = total.into_flows(repetitions, &grid, &mesh)?;
    let (_, deviation) = hjb_solve(model, &n_emp, &q_emp, &grid, &mesh)?;
    let dev: Vec<f64> = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let profile = Profile::Deviation { base: policy, player: 0, policy: &deviation };
            let moved = simulate_profile(model, &profile, n, seed, repetition_id(n, r), &time)?;
            estimate_reward(model, &moved, 0)
        })
        .collect::<Result<_>>()?;
    let diff: Vec<f64> = dev.iter().zip(&sym).map(|(d, s)| d - s).collect();
    let d = Summary::of(&diff)?;
    Ok(NashEstimate {
        n,
        eps_hat: d.mean.max(0.0),
        stderr: d.stderr,
        symmetric: Summary::of(&sym)?,
        deviation: Summary::of(&dev)?,
        proxy_order: 1.0 / n as f64,
    })
}

/// Outcome of the convergence trend check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Medians strictly decrease with `N`.
    Decreasing,
    /// The mean-field limit of the simulated policy stays away from `n*`.
    Plateau,
    /// Neither of the above.
    NotDecreasing,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Decreasing => "decreasing",
            Verdict::Plateau => "plateau",
            Verdict::NotDecreasing => "not-decreasing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `sup_t W_p(empirical state flow, n*)`.
    pub state: Quartiles,
    /// `Σ Δt W_p(empirical joint flow, q*)` with the product-space bound.
    pub joint: Quartiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub p: f64,
    pub repetitions: usize,
    pub rows: Vec<ConvergenceRow>,
    /// `sup_t W_p` between the policy's mean-field state flow and `n*`: the
    /// level at which the state medians level off.
    pub limit_distance: f64,
    /// Same for the joint flow against `q*`, with the product-space bound.
    pub joint_limit_distance: f64,
    pub verdict: Verdict,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let p = self.p;
        let mut s = format!(
            "# N,median[sup_t W{p} state],q25,q75,joint_median[int W{p} joint bound],joint_q25,joint_q75\n"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.n, r.state.median, r.state.q25, r.state.q75, r.joint.median, r.joint.q25, r.joint.q75
            );
        }
        s
    }
}

/// Distance of empirical flows under `policy` to the solution flows.
///
/// `policy` is normally `sol.policy`; any other policy on the solver grid
/// serves as a negative control. The verdict is `Plateau` when the
/// mean-field flows of `policy` stay at least half the largest population's
/// median away from `(n*, q*)`, in either the state or the joint distance.
/// Otherwise it is `Decreasing` if the state medians strictly decrease.
pub fn convergence_to_mfg(
    model: &ModelSpec,
    sol: &MfgSolution,
    policy: &FeedbackPolicy,
    n_list: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    check_sizes(n_list, 1)?;
    check_repetitions(repetitions)?;
    let (grid, mesh) = solution_grid(sol);
    let p = model.p;
    let limit = fp_solve(model, &sol.n_star, &sol.q_star, Control::Feedback(policy), &grid)?;
    let mut limit_distance: f64 = 0.0;
    for (a, b) in limit.frames().iter().zip(sol.n_star.frames()) {
        limit_distance = limit_distance.max(wasserstein_1d(a, b, p)?);
    }
    let targets: Vec<JointMeasure> = sol.q_star.joint_measures();
    let time = grid.time.clone();
    let limit_joint = feedback_joint_flow(&limit, policy, &mesh);
    let mut joint_limit_distance = 0.0;
    for k in 0..time.steps() {
        let d = wasserstein_product(&limit_joint.frame(k).to_joint_measure(), &targets[k], p, ProductOptions::bound())?;
        joint_limit_distance += time.dt(k) * d.value;
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let samples: Vec<(f64, f64)> = (0..repetitions)
            .into_par_iter()
            .map(|r| {
                let run = simulate_profile(model, &Profile::Symmetric(policy), n, seed, repetition_id(n, r), &time)?;
                let mut state: f64 = 0.0;
                for (a, b) in run.state_flow.frames().iter().zip(sol.n_star.frames()) {
                    state = state.max(wasserstein_1d(a, b, p)?);
                }
                let mut joint = 0.0;
                for k in 0..time.steps() {
                    let d = wasserstein_product(run.joint_flow.frame(k), &targets[k], p, ProductOptions::bound())?;
                    joint += time.dt(k) * d.value;
                }
                Ok((state, joint))
            })
            .collect::<Result<_>>()?;
        let state: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let joint: Vec<f64> = samples.iter().map(|s| s.1).collect();
        rows.push(ConvergenceRow { n, state: Quartiles::of(&state), joint: Quartiles::of(&joint) });
    }
    let last = rows.last().expect("at least one population size");
    let verdict = if limit_distance >= 0.5 * last.state.median
        || joint_limit_distance >= 0.5 * last.joint.median
    {
        Verdict::Plateau
    } else if rows.windows(2).all(|w| w[1].state.median < w[0].state.median) {
        Verdict::Decreasing
    } else {
        Verdict::NotDecreasing
    };
    Ok(ConvergenceTable { p, repetitions, rows, limit_distance, joint_limit_distance, verdict })
}

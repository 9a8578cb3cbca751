//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mfgc_core::best_response::{
    feedback_joint_flow, hjb_solve, node_objectives, reward_functional, value_at_initial,
    FeedbackPolicy,
};
use mfgc_core::fixed_point::{certify, regularity_check, solve_mfg, RegularityConstants, SolverOptions};
use mfgc_core::fokker_planck::{constant_joint_flow, fp_residual, fp_solve, static_flow, Control, FpGrid, TestFamily};
use mfgc_core::measures::{wasserstein_1d, wasserstein_product, ProductMode, ProductOptions};
use mfgc_core::model::{builtin, validate, InitialLaw, ModelSpec, ProbePlan};
use mfgc_core::particles::{convergence_to_mfg, deviation_experiment, nash_gap, Verdict};
use mfgc_core::rng;
use mfgc_core::{DiscreteMeasure, JointAtom, JointMeasure};
use rand_chacha::ChaCha8Rng;

/// Every output file of a run, keyed by relative path.
type Snapshot = BTreeMap<String, Vec<u8>>;

type Check = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let spent = start.elapsed();
    o.passed &= spent < limit;
    o.detail = format!("{}; {:.2}s (limit {}s)", o.detail, spent.as_secs_f64(), limit.as_secs());
    o
}

fn paper_toy_setup() -> (ModelSpec, FpGrid, Arc<[f64]>) {
    let model = builtin("paper_toy", &BTreeMap::new()).unwrap();
    let grid = FpGrid::new(-2.0, 2.0, 120, 0.025, 60).unwrap();
    let mesh = model.control_mesh(33).unwrap();
    (model, grid, mesh)
}

fn heat_run(cells: usize, steps: usize) -> (f64, f64) {
    let mut model = ModelSpec::zero("heat", 0.0, 0.0, InitialLaw::Gaussian { mean: 0.0, variance: 0.25 });
    model.a_circ = Arc::new(|_, _, _, _| 1.0);
    model.theta = 1.0;
    let grid = FpGrid::new(-5.0, 5.0, cells, 0.5, steps).unwrap();
    let mesh = model.control_mesh(1).unwrap();
    let n0 = static_flow(&model, &grid).unwrap();
    let q0 = constant_joint_flow(&n0, &mesh, 0);
    let policy = FeedbackPolicy::constant(&grid, 0.0, 0.0, 0.0).unwrap();
    let n = fp_solve(&model, &n0, &q0, Control::Feedback(&policy), &grid).unwrap();
    let exact = InitialLaw::Gaussian { mean: 0.0, variance: 0.75 }.project(&grid.space).unwrap().masses();
    let l1 = n.frame(steps).masses().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
    let q = constant_joint_flow(&n, &mesh, 0);
    (l1, fp_residual(&n, &n, &q, &q, &model, TestFamily::V1).unwrap().max)
}

fn fokker_planck() -> Outcome {
    let (l1, coarse) = timed_value(|| heat_run(200, 400));
    let (_, fine) = heat_run(400, 1600);
    let ratio = coarse / fine;
    let passed = l1.0 <= 2e-2 && l1.1 < Duration::from_secs(5) && ratio >= 1.7;
    outcome(
        passed,
        format!(
            "L1 {:.3e} (<= 2e-2) in {:.2}s (< 5s); residual {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2} (>= 1.7)",
            l1.0,
            l1.1.as_secs_f64()
        ),
    )
}

/// `((l1, elapsed), residual)` for the coarse heat run.
fn timed_value(f: impl FnOnce() -> (f64, f64)) -> ((f64, Duration), f64) {
    let start = Instant::now();
    let (l1, res) = f();
    ((l1, start.elapsed()), res)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Random measure with at most six atoms and weights in multiples of 1/6,
/// returned with its expansion into six equally weighted copies.
/// Atoms `(x, u, weight)` and their expansion into six points `(x, u)`.
type Sampled = (Vec<(f64, f64, f64)>, Vec<(f64, f64)>);

fn random_measure(r: &mut ChaCha8Rng) -> Sampled {
    let mut next = || rng::uniform(r);
    let atoms = 1 + (next() * 6.0) as usize;
    let mut counts = vec![1usize; atoms];
    for _ in atoms..6 {
        counts[(next() * atoms as f64) as usize] += 1;
    }
    let mut list = Vec::new();
    let mut copies = Vec::new();
    for c in counts {
        let (x, u) = (6.0 * next() - 3.0, next());
        list.push((x, u, c as f64 / 6.0));
        copies.extend(std::iter::repeat_n((x, u), c));
    }
    (list, copies)
}

fn wasserstein_oracle() -> Outcome {
    let perms = permutations(6);
    let mut src = rng::stream(2024, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (a, ca) = random_measure(&mut src);
        let (b, cb) = random_measure(&mut src);
        let best = |cost: &dyn Fn(usize, usize) -> f64| {
            perms
                .iter()
                .map(|s| s.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>() / 6.0)
                .fold(f64::INFINITY, f64::min)
        };
        let line = best(&|i, j| (ca[i].0 - cb[j].0).powi(2));
        let joint = best(&|i, j| (ca[i].0 - cb[j].0).powi(2) + (ca[i].1 - cb[j].1).powi(2));
        let mu = DiscreteMeasure::new(a.iter().map(|t| t.0).collect(), a.iter().map(|t| t.2).collect()).unwrap();
        let nu = DiscreteMeasure::new(b.iter().map(|t| t.0).collect(), b.iter().map(|t| t.2).collect()).unwrap();
        let jm = |v: &[(f64, f64, f64)]| {
            JointMeasure::new(v.iter().map(|&(x, u, w)| JointAtom { x, u, w }).collect()).unwrap()
        };
        let opts = ProductOptions { mode: ProductMode::Exact, ..ProductOptions::default() };
        let w_line = wasserstein_1d(&mu, &nu, 2.0).unwrap().powi(2);
        let w_joint = wasserstein_product(&jm(&a), &jm(&b), 2.0, opts).unwrap().value.powi(2);
        worst = worst.max((w_line - line).abs()).max((w_joint - joint).abs());
    }
    outcome(worst <= 1e-9, format!("100 pairs on R and RxU, worst |W2^2 - exhaustive| {worst:.2e} (<= 1e-9)"))
}

fn best_response_oracle() -> Outcome {
    let model = builtin("decoupled", &BTreeMap::new()).unwrap();
    let grid = FpGrid::new(-2.0, 2.0, 120, 0.025, 60).unwrap();
    let mesh = model.control_mesh(33).unwrap();
    let n = static_flow(&model, &grid).unwrap();
    let q = constant_joint_flow(&n, &mesh, 16);
    let (value, policy) = hjb_solve(&model, &n, &q, &grid, &mesh).unwrap();
    let v0 = value_at_initial(&model, &value, &grid).unwrap();
    let mut best = f64::NEG_INFINITY;
    for j in (0..33).step_by(4) {
        let p = FeedbackPolicy::constant(&grid, mesh[j], model.u_lo, model.u_hi).unwrap();
        let n_u = fp_solve(&model, &n, &q, Control::Feedback(&p), &grid).unwrap();
        let q_u = feedback_joint_flow(&n_u, &p, &mesh);
        best = best.max(reward_functional(&n_u, &n, &q_u, &q, &model).unwrap());
    }
    let mut nodes_ok = true;
    for k in 0..grid.steps() {
        let (objs, stars) = node_objectives(&model, &n, &q, &grid, &mesh, &value, k).unwrap();
        for (i, row) in objs.iter().enumerate() {
            let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let chosen = mesh.iter().position(|&u| u == policy.value(k, i)).unwrap();
            nodes_ok &= row[chosen] == top && top + stars[i] == value.value(k, i);
        }
    }
    let diff = (v0 - best).abs();
    outcome(
        diff <= 1e-2 && nodes_ok,
        format!("|V(nu) - best constant| {diff:.3e} (<= 1e-2); per-node optimality exact: {nodes_ok}"),
    )
}

fn certificate() -> Outcome {
    let (model, grid, mesh) = paper_toy_setup();
    let opts = SolverOptions::default();
    let sol = solve_mfg(&model, &grid, &mesh, opts).unwrap();
    let c = &sol.certificate;
    let again = certify(&model, (&sol.n_star, &sol.q_star), &grid, &mesh, &opts).unwrap();
    let identical = again.epsilon.to_bits() == c.epsilon.to_bits()
        && again.consistency_gap.to_bits() == c.consistency_gap.to_bits()
        && again.fp_residual_max.to_bits() == c.fp_residual_max.to_bits();
    let report = validate(&model, &ProbePlan::default_for(&model, -2.0, 2.0, 0.025));
    let constants = RegularityConstants::for_model(&model, &report, 0.025);
    let regular = regularity_check(&sol.n_star, &constants).unwrap().passed();
    let passed = c.epsilon <= 1e-2 && c.consistency_gap <= 1e-3 && c.iterations <= 200 && identical && regular;
    outcome(
        passed,
        format!(
            "eps {:.3e} (<= 1e-2), gap {:.3e} (<= 1e-3), {} iterations (<= 200), certify bit-identical: {identical}, regularity: {regular}",
            c.epsilon, c.consistency_gap, c.iterations
        ),
    )
}

fn deviation_rate() -> Outcome {
    let (model, grid, mesh) = paper_toy_setup();
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let deviation = FeedbackPolicy::constant(&grid, 0.2, model.u_lo, model.u_hi).unwrap();
    let sizes = [8, 16, 32, 64, 128, 256];
    let stats = deviation_experiment(&model, &sol.policy, &deviation, &sizes, 200, 1).unwrap();
    let slope = stats.flow_slope.unwrap_or(f64::NAN);
    let trend = stats.scaled_proxy_trend;
    outcome(
        (-1.35..=-0.65).contains(&slope) && !trend.upward(0.05),
        format!(
            "slope {slope:.3} (in [-1.35, -0.65]), 200 repetitions; Mann-Kendall on N*proxy S = {}, p_upward {:.3} (>= 0.05)",
            trend.s, trend.p_upward
        ),
    )
}

fn convergence() -> Outcome {
    let (model, grid, mesh) = paper_toy_setup();
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let sizes = [16, 64, 256];
    let good = convergence_to_mfg(&model, &sol, &sol.policy, &sizes, 50, 3).unwrap();
    let wrong_policy = FeedbackPolicy::constant(&grid, 1.0, model.u_lo, model.u_hi).unwrap();
    let wrong = convergence_to_mfg(&model, &sol, &wrong_policy, &sizes, 50, 3).unwrap();
    let medians = |t: &mfgc_core::particles::ConvergenceTable| -> Vec<f64> {
        t.rows.iter().map(|r| r.state.median).collect()
    };
    let (g, w) = (medians(&good), medians(&wrong));
    let terminal = g[g.len() - 1];
    let plateau = wrong.verdict == Verdict::Plateau
        && w[w.len() - 1] > terminal
        && wrong.limit_distance > terminal;
    outcome(
        good.verdict == Verdict::Decreasing && plateau,
        format!(
            "MFG medians {:.4?} ({}); constant u = 1 medians {:.4?} ({}), limit {:.4} vs MFG terminal {terminal:.4}",
            g,
            good.verdict.as_str(),
            w,
            wrong.verdict.as_str(),
            wrong.limit_distance
        ),
    )
}

fn nash() -> Outcome {
    let model = builtin("decoupled", &BTreeMap::new()).unwrap();
    let grid = FpGrid::new(-2.0, 2.0, 120, 0.025, 60).unwrap();
    let mesh = model.control_mesh(33).unwrap();
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let d = nash_gap(&model, &sol, 64, 100, 5).unwrap();
    let decoupled_ok = d.eps_hat <= 2.0 * d.stderr + 1e-2;

    let (model, grid, mesh) = paper_toy_setup();
    let sol = solve_mfg(&model, &grid, &mesh, SolverOptions::default()).unwrap();
    let p = nash_gap(&model, &sol, 256, 100, 5).unwrap();
    let scale = p.symmetric.mean.abs();
    let allowance = sol.certificate.epsilon + 0.05 * scale;
    let toy_ok = p.eps_hat <= allowance;
    outcome(
        decoupled_ok && toy_ok,
        format!(
            "decoupled N=64 eps_hat {:.3e} (<= {:.3e}); paper_toy N=256 eps_hat {:.3e} (<= eps {:.3e} + 0.05*|J| = {allowance:.3e})",
            d.eps_hat,
            2.0 * d.stderr + 1e-2,
            p.eps_hat,
            sol.certificate.epsilon
        ),
    )
}

fn run_cli(config: &Path, out: &Path, threads: Option<&str>) -> Vec<i32> {
    let bin = env!("CARGO_BIN_EXE_mfgc");
    ["validate", "solve", "deviate", "converge", "nash"]
        .iter()
        .map(|cmd| {
            let mut c = Command::new(bin);
            c.args([cmd, "--config"]).arg(config).arg("--out").arg(out).args(["--seed", "17"]);
            c.env_remove("MFGC_THREADS");
            if let Some(t) = threads {
                c.args(["--threads", t]);
            }
            c.output().expect("run mfgc").status.code().unwrap_or(-1)
        })
        .collect()
}

fn files(dir: &Path) -> Snapshot {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.conf");
    std::fs::write(
        &config,
        "model.name = paper_toy\nexperiment.N_list = 8, 16, 32\nexperiment.repetitions = 50\n",
    )
    .unwrap();
    let runs: Vec<(Vec<i32>, Snapshot)> = [None, None, Some("8")]
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let out = tmp.path().join(format!("run{k}"));
            let codes = run_cli(&config, &out, *t);
            (codes, files(&out))
        })
        .collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same && !runs[0].1.is_empty(),
        format!(
            "5 commands x 3 runs (default, repeat, --threads 8): {} files, exit codes {:?}, byte-identical: {same}",
            runs[0].1.len(),
            runs[0].0
        ),
    )
}

fn main() {
    let criteria: [Check; 8] = [
        ("Fokker-Planck heat kernel", Duration::from_secs(60), fokker_planck),
        ("Wasserstein oracle", Duration::from_secs(10), wasserstein_oracle),
        ("best-response oracle", Duration::from_secs(60), best_response_oracle),
        ("equilibrium certificate", Duration::from_secs(120), certificate),
        ("deviation rate", Duration::from_secs(600), deviation_rate),
        ("convergence to the solution", Duration::from_secs(600), convergence),
        ("Nash gap", Duration::from_secs(600), nash),
        ("CLI determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let o = timed(*limit, check);
        println!("criterion {} [{}] {name}: {}", k + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! The five subcommands. Each returns its exit status: 0 on success, 1 for a
//! failed check or verdict, 3 when the solver did not converge.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mfgc_core::best_response::FeedbackPolicy;
use mfgc_core::fixed_point::{
    read_solution, regularity_check, solve_mfg, write_solution, MfgSolution, RegularityConstants,
};
use mfgc_core::fokker_planck::{Boundary, FpGrid};
use mfgc_core::model::{builtin, validate as check_model, ModelSpec, ProbePlan, ValidationReport};
use mfgc_core::particles::{convergence_to_mfg, deviation_experiment, nash_csv, nash_gap, Verdict};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::plot::{Chart, Series};

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context {
    fn model(&self) -> Result<ModelSpec, CliError> {
        Ok(builtin(&self.config.model, &self.config.params)?)
    }

    fn grid(&self) -> Result<FpGrid, CliError> {
        let g = &self.config.grid;
        Ok(FpGrid::new(g.x_lo, g.x_hi, g.cells, g.horizon, g.steps)?)
    }

    fn solution_dir(&self) -> PathBuf {
        self.out.join("solution")
    }

    fn report(&self, model: &ModelSpec) -> ValidationReport {
        let g = &self.config.grid;
        check_model(model, &ProbePlan::default_for(model, g.x_lo, g.x_hi, g.horizon))
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        write_file(&self.out.join(name), contents)
    }

    /// Loads the solution written by `solve` and checks it was computed on
    /// the configured grid.
    fn load_solution(&self) -> Result<(MfgSolution, FpGrid, Arc<[f64]>), CliError> {
        let sol = read_solution(&self.solution_dir())?;
        let grid = FpGrid {
            space: *sol.n_star.cell_grid(),
            time: sol.n_star.time().clone(),
            boundary: Boundary::Reflecting,
        };
        let configured = self.grid()?;
        if !grid.space.same_as(&configured.space) || !grid.time.same_as(&configured.time) {
            return Err(CliError::Config(format!(
                "solution in {} was computed on another grid; rerun `solve`",
                self.solution_dir().display()
            )));
        }
        let mesh = sol.q_star.frame(0).controls().clone();
        Ok((sol, grid, mesh))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let fail = |source| CliError::Write { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    fs::write(path, contents).map_err(fail)
}

pub fn validate(ctx: &Context) -> Result<u8, CliError> {
    let model = ctx.model()?;
    let report = ctx.report(&model);
    ctx.write("validate.txt", &report.to_text())?;
    for item in report.items.iter().filter(|i| !i.passed) {
        eprintln!("assumption `{}` failed: {}", item.name, item.message);
    }
    if report.passed() {
        println!("model `{}`: all assumption checks passed", model.name);
        Ok(0)
    } else {
        println!("model `{}`: assumption checks failed", model.name);
        Ok(1)
    }
}

pub fn solve(ctx: &Context) -> Result<u8, CliError> {
    let model = ctx.model()?;
    let report = ctx.report(&model);
    if !report.passed() {
        ctx.write("validate.txt", &report.to_text())?;
        eprintln!("model assumptions fail; see validate.txt");
        return Ok(1);
    }
    let grid = ctx.grid()?;
    let mesh = model.control_mesh(ctx.config.controls)?;
    let sol = solve_mfg(&model, &grid, &mesh, ctx.config.solver)?;
    write_solution(&ctx.solution_dir(), &sol)?;

    let constants = RegularityConstants::for_model(&model, &report, grid.time.horizon());
    let reg = regularity_check(&sol.n_star, &constants)?;
    let mut text = String::new();
    let _ = writeln!(text, "passed = {}", reg.passed());
    let _ = writeln!(text, "time_quotient = {}", reg.time_quotient);
    let _ = writeln!(text, "time_constant = {}", constants.time);
    let _ = writeln!(text, "moment_sup = {}", reg.moment_sup);
    let _ = writeln!(text, "moment_constant = {}", constants.moment);
    let _ = writeln!(text, "nu_moment = {}", constants.nu_moment);
    ctx.write("regularity.txt", &text)?;

    let cert = &sol.certificate;
    let trace = |f: fn(&mfgc_core::fixed_point::TraceRow) -> f64| -> Vec<(f64, f64)> {
        cert.trace.iter().map(|r| (r.iter as f64, f(r))).collect()
    };
    let chart = Chart {
        title: format!("{}: fixed-point iteration", model.name),
        x_label: "iteration".into(),
        y_label: "reward / distance".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series::new("exploitability", trace(|r| r.epsilon)),
            Series::new("consistency gap", trace(|r| r.gap)),
        ],
    };
    ctx.write("solve.svg", &chart.to_svg())?;

    println!(
        "epsilon = {} consistency_gap = {} residual = {} iterations = {}",
        cert.epsilon, cert.consistency_gap, cert.fp_residual_max, cert.iterations
    );
    if !reg.passed() {
        eprintln!("warning: regularity bounds not met, see regularity.txt");
    }
    if !cert.valid {
        eprintln!("certificate invalid: residual {} > {}", cert.fp_residual_max, cert.residual_tol);
    }
    if cert.converged && cert.valid {
        Ok(0)
    } else {
        eprintln!("solver did not reach tolerance {}; best iterate written", ctx.config.solver.tol);
        Ok(3)
    }
}

pub fn deviate(ctx: &Context) -> Result<u8, CliError> {
    let model = ctx.model()?;
    let grid = ctx.grid()?;
    let mesh = model.control_mesh(ctx.config.controls)?;
    let sol = solve_mfg(&model, &grid, &mesh, ctx.config.solver)?;
    let deviation = FeedbackPolicy::constant(&grid, ctx.config.deviation_control, model.u_lo, model.u_hi)?;
    let exp = &ctx.config.experiment;
    let stats = deviation_experiment(&model, &sol.policy, &deviation, &exp.sizes, exp.repetitions, ctx.seed)?;
    ctx.write("deviate.csv", &stats.to_csv())?;

    let p = stats.p;
    let chart = Chart {
        title: format!("{}: effect of one deviating player", model.name),
        x_label: "N".into(),
        y_label: "mean over repetitions".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::new(
                format!("sup_t W{p}^{p} state flows"),
                stats.rows.iter().map(|r| (r.n as f64, r.flow_gap.mean)).collect(),
            ),
            Series::new(
                format!("sup_t |Z-X|^{p}"),
                stats.rows.iter().map(|r| (r.n as f64, r.proxy_gap.mean)).collect(),
            ),
        ],
    };
    ctx.write("deviate.svg", &chart.to_svg())?;

    let trend = stats.scaled_proxy_trend;
    let slope = stats.flow_slope;
    println!(
        "slope = {} proxy_slope = {} mann_kendall_S = {} p_upward = {}",
        slope.map_or("undefined".into(), |s| s.to_string()),
        stats.proxy_slope.map_or("undefined".into(), |s| s.to_string()),
        trend.s,
        trend.p_upward
    );
    let (lo, hi) = ctx.config.slope_range;
    let slope_ok = slope.is_some_and(|s| (lo..=hi).contains(&s));
    let trend_ok = !trend.upward(0.05);
    if !slope_ok {
        eprintln!("slope outside [{lo}, {hi}]");
    }
    if !trend_ok {
        eprintln!("N times proxy gap trends upward");
    }
    Ok(if slope_ok && trend_ok { 0 } else { 1 })
}

pub fn converge(ctx: &Context) -> Result<u8, CliError> {
    let model = ctx.model()?;
    let (sol, grid, _) = ctx.load_solution()?;
    let policy = match ctx.config.wrong_control {
        Some(u) => FeedbackPolicy::constant(&grid, u, model.u_lo, model.u_hi)?,
        None => sol.policy.clone(),
    };
    let exp = &ctx.config.experiment;
    let table = convergence_to_mfg(&model, &sol, &policy, &exp.sizes, exp.repetitions, ctx.seed)?;
    ctx.write("converge.csv", &table.to_csv())?;

    let p = table.p;
    let chart = Chart {
        title: format!("{}: distance of empirical flows to the solution", model.name),
        x_label: "N".into(),
        y_label: "median over repetitions".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::new(format!("sup_t W{p} state"), table.rows.iter().map(|r| (r.n as f64, r.state.median)).collect()),
            Series::new(
                format!("int W{p} joint (bound)"),
                table.rows.iter().map(|r| (r.n as f64, r.joint.median)).collect(),
            ),
        ],
    };
    ctx.write("converge.svg", &chart.to_svg())?;
    println!(
        "verdict = {} limit_distance = {} joint_limit_distance = {}",
        table.verdict.as_str(),
        table.limit_distance,
        table.joint_limit_distance
    );
    Ok(if table.verdict == Verdict::Decreasing { 0 } else { 1 })
}

pub fn nash(ctx: &Context) -> Result<u8, CliError> {
    let model = ctx.model()?;
    let (sol, _, _) = ctx.load_solution()?;
    let exp = &ctx.config.experiment;
    let rows = exp
        .sizes
        .iter()
        .map(|&n| nash_gap(&model, &sol, n, exp.repetitions, ctx.seed))
        .collect::<Result<Vec<_>, _>>()?;
    ctx.write("nash.csv", &nash_csv(&rows))?;
    let chart = Chart {
        title: format!("{}: estimated Nash gap", model.name),
        x_label: "N".into(),
        y_label: "reward".into(),
        log_x: true,
        log_y: false,
        series: vec![
            Series::new("eps_hat", rows.iter().map(|r| (r.n as f64, r.eps_hat)).collect()),
            Series::new("2 stderr", rows.iter().map(|r| (r.n as f64, 2.0 * r.stderr)).collect()),
        ],
    };
    ctx.write("nash.svg", &chart.to_svg())?;

    let certified = sol.certificate.epsilon;
    let mut ok = true;
    for r in &rows {
        let slack = ctx.config.nash_slack.max(ctx.config.nash_relative_slack * r.symmetric.mean.abs());
        let within = r.within(certified, slack);
        ok &= within;
        println!(
            "N = {} eps_hat = {} stderr = {} allowance = {} {}",
            r.n,
            r.eps_hat,
            r.stderr,
            certified + 2.0 * r.stderr + slack,
            if within { "ok" } else { "exceeded" }
        );
    }
    Ok(if ok { 0 } else { 1 })
}

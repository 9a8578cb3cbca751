//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! model.name = paper_toy
//! model.theta = 0.05
//! grid.M = 120
//! experiment.N_list = 8, 16, 32
//! ```
//!
//! Every key except `model.name` has a default. Keys under `model.` other
//! than `name` are passed to the model as parameters; the model rejects the
//! ones it does not know.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use mfgc_core::fixed_point::{Scheme, SolverOptions};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Number of cells `M`.
    pub cells: usize,
    /// Horizon `T`.
    pub horizon: f64,
    /// Number of time steps `L`.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub grid: GridConfig,
    /// Control mesh size `K`.
    pub controls: usize,
    pub solver: SolverOptions,
    pub experiment: ExperimentConfig,
    /// Constant control of the deviating player in `deviate`.
    pub deviation_control: f64,
    /// Accepted range of the fitted log-log slope in `deviate`.
    pub slope_range: (f64, f64),
    /// Constant policy simulated by `converge` instead of the solved one.
    pub wrong_control: Option<f64>,
    /// Absolute allowance on the Nash gap estimate.
    pub nash_slack: f64,
    /// Allowance relative to the magnitude of the symmetric reward.
    pub nash_relative_slack: f64,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "grid.x_lo",
    "grid.x_hi",
    "grid.M",
    "grid.T",
    "grid.L",
    "control.K",
    "solver.scheme",
    "solver.damping",
    "solver.tol",
    "solver.max_iter",
    "solver.residual_tol",
    "experiment.N_list",
    "experiment.repetitions",
    "experiment.base_seed",
    "deviate.control",
    "deviate.slope_lo",
    "deviate.slope_hi",
    "converge.wrong_control",
    "nash.slack",
    "nash.relative_slack",
    "output.dir",
];

/// Raw entries with their line numbers.
struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some((line, raw)) => parse_value(key, line, &raw),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, line: usize, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("line {line}: `{key}` has malformed value `{raw}`")))
}

fn check(ok: bool, what: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(what.to_string()))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(CliError::Config(format!("line {}: expected `key = value`", n + 1)));
            }
            if !key.starts_with("model.") && !KEYS.contains(&key) {
                return Err(CliError::Config(format!("line {}: unknown key `{key}`", n + 1)));
            }
            if map.insert(key.to_string(), (n + 1, value.to_string())).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        let mut e = Entries { map };

        let model = e
            .take("model.name")
            .map(|(_, v)| v)
            .ok_or_else(|| CliError::Config("missing required key `model.name`".into()))?;

        let grid = GridConfig {
            x_lo: e.parse("grid.x_lo", -2.0)?,
            x_hi: e.parse("grid.x_hi", 2.0)?,
            cells: e.parse("grid.M", 120)?,
            horizon: e.parse("grid.T", 0.025)?,
            steps: e.parse("grid.L", 60)?,
        };
        check(grid.x_lo.is_finite() && grid.x_hi.is_finite() && grid.x_lo < grid.x_hi, "grid.x_lo must be below grid.x_hi")?;
        check((3..=100_000).contains(&grid.cells), "grid.M must lie in [3, 100000]")?;
        check(grid.horizon.is_finite() && grid.horizon > 0.0, "grid.T must be positive")?;
        check((1..=1_000_000).contains(&grid.steps), "grid.L must lie in [1, 1000000]")?;

        let controls: usize = e.parse("control.K", 33)?;
        check((1..=10_000).contains(&controls), "control.K must lie in [1, 10000]")?;

        let defaults = SolverOptions::default();
        let scheme = match e.take("solver.scheme") {
            None => "fictitious_play".to_string(),
            Some((_, v)) => v,
        };
        let damping: f64 = e.parse("solver.damping", 0.5)?;
        let scheme = match scheme.as_str() {
            "fictitious_play" => Scheme::FictitiousPlay,
            "damped" => {
                check(damping > 0.0 && damping <= 1.0, "solver.damping must lie in (0, 1]")?;
                Scheme::Damped(damping)
            }
            other => {
                return Err(CliError::Config(format!(
                    "solver.scheme must be `fictitious_play` or `damped`, got `{other}`"
                )))
            }
        };
        let solver = SolverOptions {
            scheme,
            tol: e.parse("solver.tol", defaults.tol)?,
            max_iter: e.parse("solver.max_iter", defaults.max_iter)?,
            residual_tol: e.parse("solver.residual_tol", defaults.residual_tol)?,
        };
        check(solver.tol.is_finite() && solver.tol > 0.0, "solver.tol must be positive")?;
        check(solver.max_iter >= 1, "solver.max_iter must be at least 1")?;
        check(solver.residual_tol.is_finite() && solver.residual_tol > 0.0, "solver.residual_tol must be positive")?;

        let sizes = match e.take("experiment.N_list") {
            None => vec![8, 16, 32, 64, 128, 256],
            Some((line, raw)) => raw
                .split(',')
                .map(|s| parse_value::<usize>("experiment.N_list", line, s.trim()))
                .collect::<Result<Vec<_>, _>>()?,
        };
        check(sizes.iter().all(|&n| n >= 1), "experiment.N_list entries must be positive")?;
        check(sizes.windows(2).all(|w| w[0] < w[1]), "experiment.N_list must be strictly increasing")?;
        let experiment = ExperimentConfig {
            sizes,
            repetitions: e.parse("experiment.repetitions", 200)?,
            base_seed: e.parse("experiment.base_seed", 0)?,
        };
        check(experiment.repetitions >= 1, "experiment.repetitions must be positive")?;

        let deviation_control = e.parse("deviate.control", 0.2)?;
        let slope_range = (e.parse("deviate.slope_lo", -1.35)?, e.parse("deviate.slope_hi", -0.65)?);
        check(slope_range.0 < slope_range.1, "deviate.slope_lo must be below deviate.slope_hi")?;
        let wrong_control = match e.take("converge.wrong_control") {
            None => None,
            Some((line, raw)) => Some(parse_value("converge.wrong_control", line, &raw)?),
        };
        let nash_slack: f64 = e.parse("nash.slack", 1e-2)?;
        let nash_relative_slack: f64 = e.parse("nash.relative_slack", 0.05)?;
        check(nash_slack >= 0.0 && nash_relative_slack >= 0.0, "nash slacks must be non-negative")?;
        let out = PathBuf::from(e.take("output.dir").map(|(_, v)| v).unwrap_or_else(|| "out".into()));

        let mut params = BTreeMap::new();
        for (key, (line, raw)) in std::mem::take(&mut e.map) {
            let name = key.strip_prefix("model.").expect("only model keys remain");
            params.insert(name.to_string(), parse_value(&key, line, &raw)?);
        }

        Ok(Self {
            model,
            params,
            grid,
            controls,
            solver,
            experiment,
            deviation_control,
            slope_range,
            wrong_control,
            nash_slack,
            nash_relative_slack,
            out,
        })
    }
}

//! Separable model specification.
//!
//! A model splits drift, diffusion and running reward into a part that sees
//! the agent's own control (`b°`, `a°`, `L°`) and a part that sees the joint
//! state-control law of the population (`b*`, `a*`, `L*`):
//!
//! ```text
//! b = b° + b*,    σσᵀ = a° + a*,    L = L° + L*.
//! ```
//!
//! Coefficients receive the state flow up to the current time as a
//! [`FlowHistory`], so user models may depend on the past of the population.

mod builtin;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MfgError, Result};
use crate::measures::{
    deposit, quantile_sample, CellGrid, DiscreteMeasure, GridDensity, JointMeasure, Measure1d,
};

pub use builtin::{builtin, BUILTIN_NAMES};
pub use validate::{validate, CheckItem, ProbePlan, ValidationReport};

/// Mass of `ν` allowed outside the spatial grid before projection is refused.
pub const TRUNCATION_TOL: f64 = 1e-6;

/// First two moments of one frame of a state flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn of<M: Measure1d>(m: &M) -> Self {
        let mean = m.mean();
        let second = m.abs_moment(2.0);
        Self { mean, variance: (second - mean * mean).max(0.0) }
    }
}

/// Frames of a state flow, in either representation.
#[derive(Debug, Clone, Copy)]
pub enum Frames<'a> {
    Grid(&'a [GridDensity]),
    Atoms(&'a [DiscreteMeasure]),
}

impl Frames<'_> {
    pub fn len(&self) -> usize {
        match self {
            Frames::Grid(f) => f.len(),
            Frames::Atoms(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// State flow observed up to (and including) the current time `t_k`.
#[derive(Debug, Clone, Copy)]
pub struct FlowHistory<'a> {
    times: &'a [f64],
    frames: Frames<'a>,
    moments: &'a [Moments],
}

impl<'a> FlowHistory<'a> {
    /// `times`, `frames` and `moments` must have equal, nonzero length.
    pub fn new(times: &'a [f64], frames: Frames<'a>, moments: &'a [Moments]) -> Self {
        assert!(!times.is_empty(), "flow history needs at least one frame");
        assert_eq!(times.len(), frames.len());
        assert_eq!(times.len(), moments.len());
        Self { times, frames, moments }
    }

    /// Current time.
    pub fn t(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn times(&self) -> &'a [f64] {
        self.times
    }

    pub fn frames(&self) -> Frames<'a> {
        self.frames
    }

    pub fn moments(&self) -> &'a [Moments] {
        self.moments
    }

    /// Moments of the current frame.
    pub fn current(&self) -> Moments {
        self.moments[self.moments.len() - 1]
    }
}

/// Owned moment cache for a full flow, handing out [`FlowHistory`] prefixes.
#[derive(Debug, Clone)]
pub struct HistoryCache<'a> {
    times: &'a [f64],
    frames: Frames<'a>,
    moments: Vec<Moments>,
}

impl<'a> HistoryCache<'a> {
    pub fn grid(times: &'a [f64], frames: &'a [GridDensity]) -> Self {
        let moments = frames.iter().map(Moments::of).collect();
        Self { times, frames: Frames::Grid(frames), moments }
    }

    pub fn atoms(times: &'a [f64], frames: &'a [DiscreteMeasure]) -> Self {
        let moments = frames.iter().map(Moments::of).collect();
        Self { times, frames: Frames::Atoms(frames), moments }
    }

    /// History `π_{· ∧ t_k}`.
    pub fn upto(&self, k: usize) -> FlowHistory<'_> {
        let frames = match self.frames {
            Frames::Grid(f) => Frames::Grid(&f[..=k]),
            Frames::Atoms(f) => Frames::Atoms(&f[..=k]),
        };
        FlowHistory { times: &self.times[..=k], frames, moments: &self.moments[..=k] }
    }

    /// The whole flow.
    pub fn full(&self) -> FlowHistory<'_> {
        self.upto(self.times.len() - 1)
    }
}

/// `(t, x, π, u) -> value`: coefficients seeing the agent's own control.
pub type ControlCoefficient = Arc<dyn Fn(f64, f64, &FlowHistory, f64) -> f64 + Send + Sync>;
/// `(t, π, m) -> value`: drift or diffusion driven by the joint law.
pub type JointCoefficient = Arc<dyn Fn(f64, &FlowHistory, &JointMeasure) -> f64 + Send + Sync>;
/// `(t, x, π, m) -> value`: running reward driven by the joint law.
pub type JointReward = Arc<dyn Fn(f64, f64, &FlowHistory, &JointMeasure) -> f64 + Send + Sync>;
/// `(x, π) -> value`: terminal reward.
pub type TerminalReward = Arc<dyn Fn(f64, &FlowHistory) -> f64 + Send + Sync>;

/// Initial law `ν` of the representative agent.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Gaussian { mean: f64, variance: f64 },
    Uniform { lo: f64, hi: f64 },
    Atoms(DiscreteMeasure),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(*variance > 0.0) || !variance.is_finite() {
                    return Err(MfgError::InvalidParameter(format!(
                        "gaussian({mean}, {variance}) needs a positive variance"
                    )));
                }
            }
            InitialLaw::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(MfgError::InvalidParameter(format!("uniform({lo}, {hi}) needs lo < hi")));
                }
            }
            InitialLaw::Atoms(_) => {}
        }
        Ok(())
    }

    /// Law of `ν` on `[x_lo, x]`.
    fn cdf(&self, x: f64) -> f64 {
        match self {
            InitialLaw::Gaussian { mean, variance } => normal(*mean, *variance).cdf(x),
            InitialLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            InitialLaw::Atoms(m) => m.atoms().filter(|(p, _)| *p <= x).map(|(_, w)| w).sum(),
        }
    }

    /// Cell masses of `ν` on `grid`, renormalized to one.
    ///
    /// Absolutely continuous laws are integrated exactly over each cell;
    /// atoms are deposited by cloud-in-cell splitting. Fails if more than
    /// [`TRUNCATION_TOL`] of the mass lies outside the grid.
    pub fn project(&self, grid: &CellGrid) -> Result<GridDensity> {
        self.validate()?;
        let outside = match self {
            InitialLaw::Atoms(m) => m
                .atoms()
                .filter(|(x, _)| *x < grid.x_lo || *x > grid.x_hi)
                .map(|(_, w)| w)
                .sum(),
            _ => self.cdf(grid.x_lo) + (1.0 - self.cdf(grid.x_hi)),
        };
        if outside > TRUNCATION_TOL {
            return Err(MfgError::Truncation(outside));
        }
        let masses = match self {
            InitialLaw::Atoms(m) => deposit(m.atoms(), grid),
            _ => {
                let edges: Vec<f64> =
                    (0..=grid.cells).map(|i| self.cdf(grid.left_edge(i))).collect();
                edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
            }
        };
        let total: f64 = masses.iter().sum();
        let dx = grid.dx();
        Ok(GridDensity::from_values_unchecked(
            *grid,
            masses.into_iter().map(|m| m / (total * dx)).collect(),
        ))
    }

    /// Sample of `ν` obtained from a uniform level `v ∈ [0, 1)`.
    pub fn sample(&self, v: f64) -> f64 {
        match self {
            InitialLaw::Gaussian { mean, variance } => {
                normal(*mean, *variance).inverse_cdf(v.clamp(1e-300, 1.0 - 1e-16))
            }
            InitialLaw::Uniform { lo, hi } => lo + (hi - lo) * v,
            InitialLaw::Atoms(m) => quantile_sample(m, v).unwrap_or(f64::NAN),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::Gaussian { mean, .. } => *mean,
            InitialLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            InitialLaw::Atoms(m) => m.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            InitialLaw::Gaussian { variance, .. } => *variance,
            InitialLaw::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            InitialLaw::Atoms(m) => m.variance(),
        }
    }

    /// `∫ |x|^q ν(dx)`, by exact formula or fine quadrature.
    pub fn abs_moment(&self, q: f64) -> f64 {
        match self {
            InitialLaw::Atoms(m) => m.abs_moment(q),
            InitialLaw::Uniform { lo, hi } => {
                let prim = |x: f64| x.signum() * x.abs().powf(q + 1.0) / (q + 1.0);
                (prim(*hi) - prim(*lo)) / (hi - lo)
            }
            InitialLaw::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let n = 4000;
                let (a, b) = (mean - 12.0 * sd, mean + 12.0 * sd);
                let h = (b - a) / n as f64;
                (0..n)
                    .map(|i| {
                        let x = a + (i as f64 + 0.5) * h;
                        let pdf = (-0.5 * ((x - mean) / sd).powi(2)).exp()
                            / (sd * (2.0 * std::f64::consts::PI).sqrt());
                        pdf * x.abs().powf(q) * h
                    })
                    .sum()
            }
        }
    }
}

impl fmt::Display for InitialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLaw::Gaussian { mean, variance } => write!(f, "gaussian({mean},{variance})"),
            InitialLaw::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            InitialLaw::Atoms(m) => write!(f, "atoms({})", m.len()),
        }
    }
}

fn normal(mean: f64, variance: f64) -> Normal {
    Normal::new(mean, variance.sqrt()).expect("validated gaussian parameters")
}

/// A separable mean field game of controls with state dimension one.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub b_circ: ControlCoefficient,
    pub a_circ: ControlCoefficient,
    pub l_circ: ControlCoefficient,
    pub b_star: JointCoefficient,
    pub a_star: JointCoefficient,
    pub l_star: JointReward,
    pub g: TerminalReward,
    /// Common-noise intensity; only the particle simulator uses it.
    pub sigma0: f64,
    /// Ellipticity floor: `a° + a* >= theta`.
    pub theta: f64,
    pub nu: InitialLaw,
    /// Moment order of the Wasserstein metrics.
    pub p: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    /// Declared constant for boundedness, Lipschitz and growth checks.
    pub growth: f64,
    /// Named parameters the model was built from.
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("sigma0", &self.sigma0)
            .field("theta", &self.theta)
            .field("nu", &self.nu)
            .field("p", &self.p)
            .field("u", &(self.u_lo, self.u_hi))
            .field("growth", &self.growth)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Model with all coefficients zero on `U = [u_lo, u_hi]`; set the
    /// coefficient fields to build a game.
    pub fn zero(name: impl Into<String>, u_lo: f64, u_hi: f64, nu: InitialLaw) -> Self {
        Self {
            name: name.into(),
            b_circ: Arc::new(|_, _, _, _| 0.0),
            a_circ: Arc::new(|_, _, _, _| 0.0),
            l_circ: Arc::new(|_, _, _, _| 0.0),
            b_star: Arc::new(|_, _, _| 0.0),
            a_star: Arc::new(|_, _, _| 0.0),
            l_star: Arc::new(|_, _, _, _| 0.0),
            g: Arc::new(|_, _| 0.0),
            sigma0: 0.0,
            theta: 0.0,
            nu,
            p: 2.0,
            u_lo,
            u_hi,
            growth: 1.0,
            params: BTreeMap::new(),
        }
    }

    /// Total drift `b° + b*`.
    pub fn drift(&self, t: f64, x: f64, pi: &FlowHistory, m: &JointMeasure, u: f64) -> f64 {
        (self.b_circ)(t, x, pi, u) + (self.b_star)(t, pi, m)
    }

    /// Total diffusion `a° + a*`.
    pub fn diffusion(&self, t: f64, x: f64, pi: &FlowHistory, m: &JointMeasure, u: f64) -> f64 {
        (self.a_circ)(t, x, pi, u) + (self.a_star)(t, pi, m)
    }

    /// Total running reward `L° + L*`.
    pub fn running_reward(&self, t: f64, x: f64, pi: &FlowHistory, m: &JointMeasure, u: f64) -> f64 {
        (self.l_circ)(t, x, pi, u) + (self.l_star)(t, x, pi, m)
    }

    /// Moment order used for the moment bound, `p' = p + 1`.
    pub fn p_prime(&self) -> f64 {
        self.p + 1.0
    }

    /// Uniform mesh of `k` points on `U`.
    pub fn control_mesh(&self, k: usize) -> Result<Arc<[f64]>> {
        if k == 0 {
            return Err(MfgError::InvalidParameter("control mesh needs at least one point".into()));
        }
        if k == 1 || self.u_lo == self.u_hi {
            return Ok(vec![self.u_lo; 1].into());
        }
        let h = (self.u_hi - self.u_lo) / (k - 1) as f64;
        let mut mesh: Vec<f64> = (0..k).map(|j| self.u_lo + j as f64 * h).collect();
        mesh[k - 1] = self.u_hi;
        Ok(mesh.into())
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

//! A priori bounds on controlled state flows.
//!
//! Any state flow produced by the dynamics satisfies
//!
//! ```text
//! W_p(n_t, n_s)^p ≤ C_time |t - s|
//! sup_t ∫ |x|^{p'} n_t(dx) ≤ C_moment (1 + ∫ |y|^{p'} ν(dy)),   p' = p + 1
//! ```
//!
//! with constants that depend only on bounds of the drift and diffusion.

use statrs::function::gamma::gamma;

use crate::error::Result;
use crate::measures::{wasserstein_1d, Measure1d, MeasureFlow};
use crate::model::{ModelSpec, ValidationReport};

/// `E|Z|^q` for a standard normal `Z`.
fn gaussian_abs_moment(q: f64) -> f64 {
    2f64.powf(q / 2.0) * gamma((q + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants {
    pub p: f64,
    pub time: f64,
    pub moment: f64,
    /// `∫ |y|^{p'} ν(dy)`.
    pub nu_moment: f64,
}

impl RegularityConstants {
    /// Constants from drift and diffusion bounds `b`, `a` over `[0, T]`:
    ///
    /// ```text
    /// C_time   = 2^{p-1} (b^p T^{p-1} + c_p a^{p/2} T^{p/2-1})
    /// C_moment = 3^{p'-1} max(1, (bT)^{p'} + c_{p'} (aT)^{p'/2})
    /// ```
    ///
    /// where `c_q = E|Z|^q` for a standard normal.
    pub fn new(p: f64, max_drift: f64, max_diffusion: f64, horizon: f64, nu_moment: f64) -> Self {
        let (b, a, t) = (max_drift, max_diffusion, horizon);
        let time = 2f64.powf(p - 1.0)
            * (b.powf(p) * t.powf(p - 1.0) + gaussian_abs_moment(p) * a.powf(p / 2.0) * t.powf(p / 2.0 - 1.0));
        let pp = p + 1.0;
        let moment = 3f64.powf(pp - 1.0)
            * (1.0f64).max((b * t).powf(pp) + gaussian_abs_moment(pp) * (a * t).powf(pp / 2.0));
        Self { p, time, moment, nu_moment }
    }

    /// Constants for `model` using the coefficient bounds found by validation.
    pub fn for_model(model: &ModelSpec, report: &ValidationReport, horizon: f64) -> Self {
        Self::new(
            model.p,
            report.max_drift.abs() + model.sigma0.abs(),
            report.max_diffusion + model.sigma0 * model.sigma0,
            horizon,
            model.nu.abs_moment(model.p_prime()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    /// `max_{s < t} W_p(n_t, n_s)^p / (t - s)` over grid times.
    pub time_quotient: f64,
    /// `sup_t ∫ |x|^{p'} n_t(dx)`.
    pub moment_sup: f64,
    pub constants: RegularityConstants,
    pub time_ok: bool,
    pub moment_ok: bool,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        self.time_ok && self.moment_ok
    }
}

/// Measures both bounds on a state flow and compares them with `constants`.
pub fn regularity_check(n: &MeasureFlow, constants: &RegularityConstants) -> Result<RegularityReport> {
    let p = constants.p;
    let times = n.time().times();
    let frames = n.frames();
    let mut quotient: f64 = 0.0;
    for t in 1..frames.len() {
        for s in 0..t {
            let w = wasserstein_1d(&frames[t], &frames[s], p)?;
            quotient = quotient.max(w.powf(p) / (times[t] - times[s]));
        }
    }
    let moment_sup = frames.iter().map(|f| f.abs_moment(p + 1.0)).fold(0.0, f64::max);
    Ok(RegularityReport {
        time_quotient: quotient,
        moment_sup,
        constants: *constants,
        time_ok: quotient <= constants.time,
        moment_ok: moment_sup <= constants.moment * (1.0 + constants.nu_moment),
    })
}

//! Built-in benchmark models.
//!
//! * `paper_toy`: driftless, the agent's control enters the volatility,
//!   `σσᵀ = u² + θ + c_var · Var_m(u)`. Rewards pull the control toward
//!   `u_ref` and penalize distance to the population mean and to the origin.
//! * `decoupled`: constant diffusion, no population terms. The game reduces
//!   to a single-agent problem and serves as an oracle.
//! * `crowd_penalty`: controlled drift plus a herding drift `β · E_m[u]`,
//!   quadratic control cost, crowd-aversion and goal-seeking rewards.
//!
//! Parameter values other than the ellipticity floor are benchmark choices.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{InitialLaw, ModelSpec};
use crate::error::{MfgError, Result};

pub const BUILTIN_NAMES: [&str; 3] = ["paper_toy", "decoupled", "crowd_penalty"];

fn defaults(name: &str) -> Option<&'static [(&'static str, f64)]> {
    Some(match name {
        "paper_toy" => &[
            ("theta", 0.05),
            ("c_var", 0.5),
            ("lambda", 1.0),
            ("kappa", 1.0),
            ("gamma", 1.0),
            ("u_ref", 0.7),
        ],
        "decoupled" => &[("theta", 0.05), ("gamma", 1.0), ("u_ref", 0.3)],
        "crowd_penalty" => &[
            ("theta", 0.1),
            ("beta", 0.5),
            ("kappa", 1.0),
            ("gamma", 1.0),
            ("x_goal", 0.5),
        ],
        _ => return None,
    })
}

/// Default initial law of each built-in model.
fn default_nu(name: &str) -> InitialLaw {
    match name {
        "crowd_penalty" => InitialLaw::Gaussian { mean: 0.0, variance: 0.05 },
        _ => InitialLaw::Uniform { lo: -0.5, hi: 0.5 },
    }
}

/// Builds a built-in model. `params` overrides defaults; unknown parameter
/// names are rejected.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let table = defaults(name).ok_or_else(|| MfgError::UnknownModel(name.to_string()))?;
    let mut values: BTreeMap<String, f64> = table.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in params {
        if !values.contains_key(k) {
            return Err(MfgError::InvalidParameter(format!("model `{name}` has no parameter `{k}`")));
        }
        if !v.is_finite() {
            return Err(MfgError::InvalidParameter(format!("parameter `{k}` = {v} is not finite")));
        }
        values.insert(k.clone(), *v);
    }
    let get = |k: &str| values[k];
    let theta = get("theta");
    let nu = default_nu(name);
    let mut model = match name {
        "paper_toy" => {
            let (c_var, lambda, kappa, gamma, u_ref) =
                (get("c_var"), get("lambda"), get("kappa"), get("gamma"), get("u_ref"));
            let mut m = ModelSpec::zero(name, 0.0, 1.0, nu);
            m.a_circ = Arc::new(|_, _, _, u| u * u);
            m.a_star = Arc::new(move |_, _, joint| theta + c_var * joint.var_u());
            m.l_circ = Arc::new(move |_, _, _, u| -lambda * (u - u_ref).powi(2));
            m.l_star = Arc::new(move |_, x, _, joint| -kappa * (x - joint.mean_x()).powi(2));
            m.g = Arc::new(move |x, _| -gamma * x * x);
            // sqrt(a) Lipschitz in m with constant c_var * 2 * range^2 / sqrt(theta);
            // |L| + |g| grows with constant max(lambda, 2 kappa + gamma).
            m.growth = (2.0 * c_var / theta.max(1e-12).sqrt())
                .max(lambda)
                .max(2.0 * kappa + gamma)
                .max((1.0 + theta + 0.25 * c_var).sqrt())
                .max(1.0);
            m
        }
        "decoupled" => {
            let (gamma, u_ref) = (get("gamma"), get("u_ref"));
            let mut m = ModelSpec::zero(name, 0.0, 1.0, nu);
            m.a_circ = Arc::new(move |_, _, _, _| theta);
            m.l_circ = Arc::new(move |_, _, _, u| -(u - u_ref).powi(2));
            m.g = Arc::new(move |x, _| -gamma * x * x);
            m.growth = gamma.abs().max(1.0).max(theta.abs().sqrt());
            m
        }
        "crowd_penalty" => {
            let (beta, kappa, gamma, x_goal) =
                (get("beta"), get("kappa"), get("gamma"), get("x_goal"));
            let mut m = ModelSpec::zero(name, -1.0, 1.0, nu);
            m.b_circ = Arc::new(|_, _, _, u| u);
            m.a_circ = Arc::new(move |_, _, _, _| theta);
            m.b_star = Arc::new(move |_, _, joint| beta * joint.mean_u());
            m.l_circ = Arc::new(|_, _, _, u| -0.5 * u * u);
            m.l_star = Arc::new(move |_, x, _, joint| -kappa * (x - joint.mean_x()).powi(2));
            m.g = Arc::new(move |x, _| -gamma * (x - x_goal).powi(2));
            m.growth = (1.0 + beta.abs())
                .max(2.0 * kappa + 2.0 * gamma)
                .max(2.0 * gamma * x_goal * x_goal + 0.5)
                .max(theta.abs().sqrt());
            m
        }
        _ => unreachable!("checked against the defaults table"),
    };
    model.theta = theta;
    model.params = values;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiscreteMeasure, JointAtom, JointMeasure};
    use crate::model::HistoryCache;

    fn history_of(m: &DiscreteMeasure) -> (Vec<f64>, Vec<DiscreteMeasure>) {
        (vec![0.0], vec![m.clone()])
    }

    #[test]
    fn paper_toy_diffusion_plug_in() {
        let model = builtin("paper_toy", &BTreeMap::new()).unwrap();
        let (t, f) = history_of(&DiscreteMeasure::dirac(0.0));
        let cache = HistoryCache::atoms(&t, &f);
        let pi = cache.full();
        let m = JointMeasure::dirac(0.0, 0.4);
        assert_eq!(model.diffusion(0.0, 0.0, &pi, &m, 0.0), 0.05);
        assert_eq!(model.diffusion(0.0, 0.0, &pi, &m, 1.0), 1.05);
        let spread = JointMeasure::new(vec![
            JointAtom { x: 0.0, u: 0.0, w: 0.5 },
            JointAtom { x: 0.0, u: 1.0, w: 0.5 },
        ])
        .unwrap();
        assert!((model.diffusion(0.0, 0.0, &pi, &spread, 0.0) - (0.05 + 0.5 * 0.25)).abs() < 1e-15);
        assert_eq!(model.drift(0.0, 1.0, &pi, &spread, 1.0), 0.0);
    }

    #[test]
    fn overrides_and_errors() {
        let mut p = BTreeMap::new();
        p.insert("theta".to_string(), 0.2);
        assert_eq!(builtin("paper_toy", &p).unwrap().theta, 0.2);
        p.insert("nope".to_string(), 1.0);
        assert!(matches!(builtin("paper_toy", &p), Err(MfgError::InvalidParameter(_))));
        assert!(matches!(builtin("bogus", &BTreeMap::new()), Err(MfgError::UnknownModel(_))));
        for name in BUILTIN_NAMES {
            assert!(builtin(name, &BTreeMap::new()).is_ok());
        }
    }
}

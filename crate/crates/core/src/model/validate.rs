//! Probe-based checks of the standing assumptions on a model.
//!
//! Black-box coefficients cannot be verified symbolically, so every check is
//! an empirical statement over a finite probe set: bounds are maxima over the
//! probes, Lipschitz constants are maxima of difference quotients over probe
//! pairs. Failures are reported, never raised.

use std::fmt::Write as _;

use super::{FlowHistory, HistoryCache, ModelSpec};
use crate::measures::{
    wasserstein_1d, wasserstein_product, DiscreteMeasure, JointAtom, JointMeasure, ProductOptions,
};

/// Sampling plan for [`validate`].
#[derive(Debug, Clone)]
pub struct ProbePlan {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    /// Probe state laws; each is used as a one-frame flow history.
    pub flows: Vec<DiscreteMeasure>,
    pub joints: Vec<JointMeasure>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl ProbePlan {
    /// Default plan on `[x_lo, x_hi] x [0, horizon] x U`.
    pub fn default_for(model: &ModelSpec, x_lo: f64, x_hi: f64, horizon: f64) -> Self {
        let (ul, uh) = (model.u_lo, model.u_hi);
        let um = 0.5 * (ul + uh);
        let xm = 0.5 * (x_lo + x_hi);
        let h = 0.25 * (x_hi - x_lo);
        let flows = vec![
            DiscreteMeasure::dirac(xm),
            DiscreteMeasure::dirac(xm - h),
            DiscreteMeasure::dirac(xm + 0.5 * h),
            DiscreteMeasure::empirical(vec![xm - h, xm + h]).expect("finite points"),
            DiscreteMeasure::empirical(linspace(xm - 0.5 * h, xm + h, 5)).expect("finite points"),
        ];
        let pair = |a: (f64, f64), b: (f64, f64)| {
            JointMeasure::new(vec![
                JointAtom { x: a.0, u: a.1, w: 0.5 },
                JointAtom { x: b.0, u: b.1, w: 0.5 },
            ])
            .expect("normalized pair")
        };
        let joints = vec![
            JointMeasure::dirac(xm, ul),
            JointMeasure::dirac(xm, uh),
            JointMeasure::dirac(xm + 0.5 * h, um),
            pair((xm, ul), (xm, uh)),
            pair((xm - h, ul), (xm + h, uh)),
            pair((xm - h, um), (xm + h, um)),
        ];
        Self {
            times: linspace(0.0, horizon, 3),
            xs: linspace(x_lo, x_hi, 9),
            us: linspace(ul, uh, 5),
            flows,
            joints,
        }
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity (minimum or maximum over the probes).
    pub value: f64,
    /// Threshold the quantity is compared with.
    pub bound: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub items: Vec<CheckItem>,
    /// `min (a° + a*)` over the probes.
    pub min_diffusion: f64,
    /// `max (a° + a*)` over the probes.
    pub max_diffusion: f64,
    /// `max |b° + b*|` over the probes.
    pub max_drift: f64,
    /// `max(|b°|, |b*|, √a°, √a*)` over the probes.
    pub max_coefficient: f64,
    pub lipschitz_x: f64,
    pub lipschitz_flow: f64,
    pub lipschitz_joint: f64,
    pub growth_ratio: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }

    /// `key = value` lines followed by one line per check.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "passed = {}", self.passed());
        let _ = writeln!(s, "min_diffusion = {}", self.min_diffusion);
        let _ = writeln!(s, "max_diffusion = {}", self.max_diffusion);
        let _ = writeln!(s, "max_drift = {}", self.max_drift);
        let _ = writeln!(s, "max_coefficient = {}", self.max_coefficient);
        let _ = writeln!(s, "lipschitz_x = {}", self.lipschitz_x);
        let _ = writeln!(s, "lipschitz_flow = {}", self.lipschitz_flow);
        let _ = writeln!(s, "lipschitz_joint = {}", self.lipschitz_joint);
        let _ = writeln!(s, "growth_ratio = {}", self.growth_ratio);
        for item in &self.items {
            let _ = writeln!(
                s,
                "check {} = {} (value {}, bound {}): {}",
                item.name,
                if item.passed { "pass" } else { "fail" },
                item.value,
                item.bound,
                item.message
            );
        }
        s
    }
}

struct Probe<'a> {
    t: f64,
    pi: FlowHistory<'a>,
    m_index: usize,
}

/// Checks the standing assumptions of `model` on the probe set.
pub fn validate(model: &ModelSpec, probe: &ProbePlan) -> ValidationReport {
    let p = model.p;
    let c = model.growth;
    let caches: Vec<(Vec<f64>, Vec<DiscreteMeasure>)> =
        probe.flows.iter().map(|f| (vec![0.0], vec![f.clone()])).collect();
    let histories: Vec<HistoryCache> =
        caches.iter().map(|(t, f)| HistoryCache::atoms(t, f)).collect();
    let flow_moment: Vec<f64> = probe.flows.iter().map(|f| f.integrate(|x| x.abs().powf(p))).collect();
    let joint_moment: Vec<f64> = probe
        .joints
        .iter()
        .map(|m| m.atoms().iter().map(|a| a.w * a.x.abs().powf(p)).sum())
        .collect();

    let mut min_a = f64::INFINITY;
    let mut min_at = String::new();
    let mut max_a: f64 = 0.0;
    let mut max_b: f64 = 0.0;
    let mut max_coef: f64 = 0.0;
    let mut negative_part = None;
    let mut growth_ratio: f64 = 0.0;
    let mut non_finite = None;
    let mut lip_x: f64 = 0.0;
    let mut lip_pi: f64 = 0.0;
    let mut lip_m: f64 = 0.0;

    let bs = |pr: &Probe, x: f64, u: f64| -> (f64, f64) {
        let m = &probe.joints[pr.m_index];
        let b = model.drift(pr.t, x, &pr.pi, m, u);
        let a = model.diffusion(pr.t, x, &pr.pi, m, u);
        (b, a.max(0.0).sqrt())
    };

    for &t in &probe.times {
        for (pi_index, cache) in histories.iter().enumerate() {
            let pi = cache.full();
            for (m_index, m) in probe.joints.iter().enumerate() {
                let pr = Probe { t, pi, m_index };
                let b_star = (model.b_star)(t, &pi, m);
                let a_star = (model.a_star)(t, &pi, m);
                for (xi, &x) in probe.xs.iter().enumerate() {
                    let l_star = (model.l_star)(t, x, &pi, m);
                    let g = (model.g)(x, &pi);
                    for &u in &probe.us {
                        let b_circ = (model.b_circ)(t, x, &pi, u);
                        let a_circ = (model.a_circ)(t, x, &pi, u);
                        let l_circ = (model.l_circ)(t, x, &pi, u);
                        let vals = [b_star, a_star, l_star, g, b_circ, a_circ, l_circ];
                        if vals.iter().any(|v| !v.is_finite()) && non_finite.is_none() {
                            non_finite = Some(format!("t={t}, x={x}, u={u}"));
                        }
                        if (a_circ < 0.0 || a_star < 0.0) && negative_part.is_none() {
                            negative_part = Some(format!("a°={a_circ}, a*={a_star} at x={x}, u={u}"));
                        }
                        let a = a_circ + a_star;
                        if a < min_a {
                            min_a = a;
                            min_at = format!("t={t}, x={x}, u={u}, probe joint #{m_index}");
                        }
                        max_a = max_a.max(a);
                        max_b = max_b.max((b_circ + b_star).abs());
                        max_coef = max_coef
                            .max(b_circ.abs())
                            .max(b_star.abs())
                            .max(a_circ.max(0.0).sqrt())
                            .max(a_star.max(0.0).sqrt());
                        let scale =
                            1.0 + x.abs().powf(p) + flow_moment[pi_index] + joint_moment[m_index];
                        growth_ratio = growth_ratio.max((l_circ + l_star).abs() / scale + g.abs() / scale);

                        if xi + 1 < probe.xs.len() {
                            let x2 = probe.xs[xi + 1];
                            let (b1, s1) = bs(&pr, x, u);
                            let (b2, s2) = bs(&pr, x2, u);
                            let dx = (x2 - x).abs();
                            if dx > 0.0 {
                                lip_x = lip_x.max((b1 - b2).abs() / dx).max((s1 - s2).abs() / dx);
                            }
                        }
                    }
                }
            }
        }
    }

    // Lipschitz quotients in the flow and the joint measure.
    for &t in &probe.times {
        for &x in &probe.xs {
            for &u in &probe.us {
                for i in 0..histories.len() {
                    for j in (i + 1)..histories.len() {
                        let d = wasserstein_1d(&probe.flows[i], &probe.flows[j], p).unwrap_or(0.0);
                        if d <= 0.0 {
                            continue;
                        }
                        let (hi, hj) = (histories[i].full(), histories[j].full());
                        let pi_ = Probe { t, pi: hi, m_index: 0 };
                        let pj_ = Probe { t, pi: hj, m_index: 0 };
                        let (b1, s1) = bs(&pi_, x, u);
                        let (b2, s2) = bs(&pj_, x, u);
                        lip_pi = lip_pi.max((b1 - b2).abs() / d).max((s1 - s2).abs() / d);
                    }
                }
                let pi = histories[0].full();
                for i in 0..probe.joints.len() {
                    for j in (i + 1)..probe.joints.len() {
                        let d = wasserstein_product(&probe.joints[i], &probe.joints[j], p, ProductOptions::default())
                            .map(|d| d.value)
                            .unwrap_or(0.0);
                        if d <= 0.0 {
                            continue;
                        }
                        let (b1, s1) = bs(&Probe { t, pi, m_index: i }, x, u);
                        let (b2, s2) = bs(&Probe { t, pi, m_index: j }, x, u);
                        lip_m = lip_m.max((b1 - b2).abs() / d).max((s1 - s2).abs() / d);
                    }
                }
            }
        }
    }

    let mut items = Vec::new();
    let controls_ok = model.u_lo.is_finite() && model.u_hi.is_finite() && model.u_lo <= model.u_hi;
    items.push(CheckItem {
        name: "compact_controls",
        passed: controls_ok,
        value: model.u_hi - model.u_lo,
        bound: 0.0,
        message: format!("U = [{}, {}]", model.u_lo, model.u_hi),
    });
    let bounded_ok = max_coef <= c && negative_part.is_none() && non_finite.is_none()
        && model.sigma0.is_finite() && model.sigma0 >= 0.0;
    let mut msg = format!("max(|b°|, |b*|, √a°, √a*) = {max_coef} vs C = {c}");
    if let Some(n) = &negative_part {
        let _ = write!(msg, "; negative diffusion part {n}");
    }
    if let Some(n) = &non_finite {
        let _ = write!(msg, "; non-finite coefficient at {n}");
    }
    items.push(CheckItem { name: "bounded_coefficients", passed: bounded_ok, value: max_coef, bound: c, message: msg });
    let lip = lip_x.max(lip_pi).max(lip_m);
    items.push(CheckItem {
        name: "lipschitz",
        passed: lip <= c,
        value: lip,
        bound: c,
        message: format!("difference quotients: x {lip_x}, flow {lip_pi}, joint {lip_m}"),
    });
    let nondeg_ok = model.theta > 0.0 && min_a >= model.theta * (1.0 - 1e-12);
    items.push(CheckItem {
        name: "nondegeneracy",
        passed: nondeg_ok,
        value: min_a,
        bound: model.theta,
        message: if model.theta <= 0.0 {
            format!("ellipticity floor theta = {} must be positive", model.theta)
        } else if nondeg_ok {
            format!("min a°+a* = {min_a} >= theta = {}", model.theta)
        } else {
            format!("min a°+a* = {min_a} < theta = {} at {min_at}", model.theta)
        },
    });
    items.push(CheckItem {
        name: "reward_growth",
        passed: growth_ratio <= c,
        value: growth_ratio,
        bound: c,
        message: format!("max (|L|+|g|) / (1+|x|^p+M_p(π)+M_p(m)) = {growth_ratio} vs C = {c}"),
    });
    items.push(CheckItem {
        name: "separability",
        passed: true,
        value: 0.0,
        bound: 0.0,
        message: "structural: b = b°+b*, a = a°+a*, L = L°+L*".into(),
    });
    let nu_ok = model.nu.validate().is_ok()
        && model.p >= 2.0
        && model.nu.abs_moment(model.p_prime()).is_finite();
    items.push(CheckItem {
        name: "initial_law",
        passed: nu_ok,
        value: model.nu.abs_moment(model.p_prime()),
        bound: f64::INFINITY,
        message: format!("nu = {}, p = {}, p' = {}", model.nu, model.p, model.p_prime()),
    });

    ValidationReport {
        items,
        min_diffusion: min_a,
        max_diffusion: max_a,
        max_drift: max_b,
        max_coefficient: max_coef,
        lipschitz_x: lip_x,
        lipschitz_flow: lip_pi,
        lipschitz_joint: lip_m,
        growth_ratio,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::model::{builtin, InitialLaw, BUILTIN_NAMES};

    fn plan(m: &ModelSpec) -> ProbePlan {
        ProbePlan::default_for(m, -2.0, 2.0, 0.5)
    }

    #[test]
    fn paper_toy_nondegenerate_at_theta() {
        let m = builtin("paper_toy", &BTreeMap::new()).unwrap();
        let r = validate(&m, &plan(&m));
        assert!(r.passed(), "{}", r.to_text());
        assert!((r.min_diffusion - 0.05).abs() < 1e-15);
        assert_eq!(r.lipschitz_x, 0.0);
    }

    #[test]
    fn vanishing_diffusion_fails() {
        let mut m = ModelSpec::zero("degenerate", 0.0, 1.0, InitialLaw::Uniform { lo: 0.0, hi: 1.0 });
        m.a_circ = Arc::new(|_, _, _, u| u * u);
        m.theta = 0.05;
        let r = validate(&m, &plan(&m));
        let item = r.item("nondegeneracy").unwrap();
        assert!(!item.passed);
        assert_eq!(item.value, 0.0);
        assert!(item.message.contains("u=0"), "{}", item.message);
    }

    #[test]
    fn constant_coefficients_have_zero_quotients() {
        let mut m = ModelSpec::zero("const", 0.0, 1.0, InitialLaw::Uniform { lo: 0.0, hi: 1.0 });
        m.a_circ = Arc::new(|_, _, _, _| 0.3);
        m.b_star = Arc::new(|_, _, _| 0.2);
        m.theta = 0.3;
        let r = validate(&m, &plan(&m));
        assert_eq!((r.lipschitz_x, r.lipschitz_flow, r.lipschitz_joint), (0.0, 0.0, 0.0));
        assert!(r.passed(), "{}", r.to_text());
    }

    #[test]
    fn builtins_pass_with_defaults() {
        for name in BUILTIN_NAMES {
            let m = builtin(name, &BTreeMap::new()).unwrap();
            let r = validate(&m, &plan(&m));
            assert!(r.passed(), "{name}: {}", r.to_text());
        }
    }

    #[test]
    fn zero_theta_fails() {
        let mut p = BTreeMap::new();
        p.insert("theta".to_string(), 0.0);
        let m = builtin("paper_toy", &p).unwrap();
        assert!(!validate(&m, &plan(&m)).item("nondegeneracy").unwrap().passed);
    }
}

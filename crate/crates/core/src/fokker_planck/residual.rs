//! Weak-form residual of the controlled Fokker-Planck identity.
//!
//! For a test function `f` and a grid time `t_k` the residual is
//!
//! ```text
//! N_k(f) = <f, n'_k> - <f, ν> - Σ_{s<k} Δt [ <L°f, q'_s> + <L*f, n'_s> ]
//! ```
//!
//! with `L°f = b° f' + ½ a° f''` integrated against the joint frame `q'_s`
//! and `L*f = b* f' + ½ a* f''` (population terms from the frozen `q_s`)
//! integrated against the state frame `n'_s`. Spatial integrals use
//! midpoint quadrature at cell centres; `ν` enters through its projection
//! onto the grid of `n'`.

use super::FpGrid;
use crate::error::{MfgError, Result};
use crate::measures::{JointControlFlow, MeasureFlow};
use crate::model::ModelSpec;

/// Versioned family of test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestFamily {
    /// Thirteen functions: `x`, `x²`, `x^k e^{-x²/2}` for `k = 0..3`,
    /// Gaussian bumps of width 0.5 at -1, 0, 1, `sin(kx)` and `cos(kx)` for
    /// `k = 1, 2`.
    #[default]
    V1,
}

/// `(f, f', f'')` at a point.
type Triple = (f64, f64, f64);

impl TestFamily {
    pub fn tag(&self) -> &'static str {
        "v1"
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["x".to_string(), "x^2".to_string()];
        for k in 0..4 {
            names.push(format!("x^{k}*exp(-x^2/2)"));
        }
        for c in [-1, 0, 1] {
            names.push(format!("bump({c})"));
        }
        for k in 1..=2 {
            names.push(format!("sin({k}x)"));
            names.push(format!("cos({k}x)"));
        }
        names
    }

    pub fn len(&self) -> usize {
        13
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values and first two derivatives of every function at `x`.
    pub fn eval(&self, x: f64) -> Vec<Triple> {
        let mut out = Vec::with_capacity(13);
        out.push((x, 1.0, 0.0));
        out.push((x * x, 2.0 * x, 2.0));
        let e = (-0.5 * x * x).exp();
        for k in 0..4i32 {
            // f = x^k e, f' = (k x^{k-1} - x^{k+1}) e,
            // f'' = (k(k-1) x^{k-2} - (2k+1) x^k + x^{k+2}) e.
            let pw = |j: i32| if j < 0 { 0.0 } else { x.powi(j) };
            let kf = k as f64;
            let f = pw(k) * e;
            let d1 = (kf * pw(k - 1) - pw(k + 1)) * e;
            let d2 = (kf * (kf - 1.0) * pw(k - 2) - (2.0 * kf + 1.0) * pw(k) + pw(k + 2)) * e;
            out.push((f, d1, d2));
        }
        let s2 = 0.25;
        for c in [-1.0, 0.0, 1.0] {
            let y = x - c;
            let g = (-0.5 * y * y / s2).exp();
            out.push((g, -y / s2 * g, (y * y / (s2 * s2) - 1.0 / s2) * g));
        }
        for k in [1.0, 2.0] {
            let (s, c) = (k * x).sin_cos();
            out.push((s, k * c, -k * k * s));
            out.push((c, -k * s, -k * k * c));
        }
        out
    }
}

/// Absolute residuals `|N_k(f)|` per grid time and test function.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub family: &'static str,
    pub functions: Vec<String>,
    pub times: Vec<f64>,
    /// Row-major `times x functions`.
    pub values: Vec<f64>,
    pub max: f64,
}

impl ResidualReport {
    pub fn at(&self, k: usize, f: usize) -> f64 {
        self.values[k * self.functions.len() + f]
    }

    /// Largest residual of function `f` over time.
    pub fn max_for(&self, f: usize) -> f64 {
        (0..self.times.len()).map(|k| self.at(k, f)).fold(0.0, f64::max)
    }

    /// Comma-separated table: `# t,<function names>`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# t,{}\n", self.functions.join(","));
        for (k, t) in self.times.iter().enumerate() {
            s.push_str(&t.to_string());
            for f in 0..self.functions.len() {
                s.push(',');
                s.push_str(&self.at(k, f).to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// Residual of `(n', q')` as a control rule against the frozen `(n, q)`.
pub fn fp_residual(
    n_prime: &MeasureFlow,
    n: &MeasureFlow,
    q_prime: &JointControlFlow,
    q: &JointControlFlow,
    model: &ModelSpec,
    family: TestFamily,
) -> Result<ResidualReport> {
    let space = *n_prime.cell_grid();
    let grid = FpGrid { space, time: n_prime.time().clone(), boundary: super::Boundary::Reflecting };
    grid.check_flow(n_prime, "n'")?;
    grid.check_joint(q_prime, "q'")?;
    let frozen = super::Frozen::new(model, n, q, &grid)
        .map_err(|e| MfgError::GridMismatch(format!("frozen pair: {e}")))?;
    let centers = space.centers();
    let f_at: Vec<Vec<Triple>> = centers.iter().map(|&x| family.eval(x)).collect();
    let nf = family.len();
    let nu = model.nu.project(&space)?.masses();
    let pair = |masses: &[f64]| -> Vec<f64> {
        let mut acc = vec![0.0; nf];
        for (i, &m) in masses.iter().enumerate() {
            if m != 0.0 {
                for (a, f) in acc.iter_mut().zip(&f_at[i]) {
                    *a += m * f.0;
                }
            }
        }
        acc
    };
    let base = pair(&nu);
    let steps = grid.steps();
    let times = grid.time.times().to_vec();
    let mut integral = vec![0.0; nf];
    let mut values = Vec::with_capacity((steps + 1) * nf);
    let mut max: f64 = 0.0;
    for k in 0..=steps {
        let current = pair(&n_prime.frame(k).masses());
        for f in 0..nf {
            let r = (current[f] - base[f] - integral[f]).abs();
            max = max.max(r);
            values.push(r);
        }
        if k == steps {
            break;
        }
        let t = times[k];
        let dt = grid.time.dt(k);
        let pi = frozen.history(k);
        let table = q_prime.frame(k);
        let mesh = table.controls();
        let masses = n_prime.frame(k).masses();
        for (i, &x) in centers.iter().enumerate() {
            // Control part against q'_k, population part against n'_k.
            let mut b = frozen.b_star[k] * masses[i];
            let mut a = frozen.a_star[k] * masses[i];
            for (j, &w) in table.row(i).iter().enumerate() {
                if w > 0.0 {
                    b += w * (model.b_circ)(t, x, &pi, mesh[j]);
                    a += w * (model.a_circ)(t, x, &pi, mesh[j]);
                }
            }
            if b == 0.0 && a == 0.0 {
                continue;
            }
            for (acc, fv) in integral.iter_mut().zip(&f_at[i]) {
                *acc += dt * (b * fv.1 + 0.5 * a * fv.2);
            }
        }
    }
    Ok(ResidualReport { family: family.tag(), functions: family.names(), times, values, max })
}

use std::cmp::Ordering;

use super::transport::exact_transport_cost;
use super::{JointAtom, JointMeasure, Measure1d, QuantilePiece};
use crate::error::{MfgError, Result};

/// Default atom cap for exact product-space transport.
pub const DEFAULT_SUPPORT_CAP: usize = 4096;

/// `W_p(mu, nu)` on the real line by exact quantile coupling.
///
/// Both quantile functions are piecewise linear, so on every interval
/// between consecutive breakpoints their difference is linear and `|d|^p`
/// integrates in closed form.
pub fn wasserstein_1d<A, B>(mu: &A, nu: &B, p: f64) -> Result<f64>
where
    A: Measure1d + ?Sized,
    B: Measure1d + ?Sized,
{
    if !(p >= 1.0) || !p.is_finite() {
        return Err(MfgError::InvalidParameter(format!("Wasserstein order must be >= 1, got {p}")));
    }
    let a = mu.quantile_pieces();
    let b = nu.quantile_pieces();
    if a.is_empty() || b.is_empty() {
        return Err(MfgError::EmptyMeasure);
    }
    let (mut i, mut j) = (0, 0);
    let mut v = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let end = a[i].v1.min(b[j].v1);
        let h = end - v;
        if h > 0.0 {
            let d0 = eval(&a[i], v) - eval(&b[j], v);
            let d1 = eval(&a[i], end) - eval(&b[j], end);
            total += h * mean_abs_pow(d0, d1, p);
        }
        v = end;
        if a[i].v1 <= end {
            i += 1;
        }
        if b[j].v1 <= end {
            j += 1;
        }
    }
    Ok(total.max(0.0).powf(1.0 / p))
}

fn eval(piece: &QuantilePiece, v: f64) -> f64 {
    let span = piece.v1 - piece.v0;
    if piece.x0 == piece.x1 || span <= 0.0 {
        return piece.x0;
    }
    let s = ((v - piece.v0) / span).clamp(0.0, 1.0);
    piece.x0 + (piece.x1 - piece.x0) * s
}

/// Average of `|d(s)|^p` over `s in [0, 1]` for `d` linear from `d0` to `d1`.
fn mean_abs_pow(d0: f64, d1: f64, p: f64) -> f64 {
    if p == 2.0 {
        return (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    }
    if d0 * d1 < 0.0 {
        // Split at the zero crossing; each side is a one-signed ramp to 0.
        let (a0, a1) = (d0.abs(), d1.abs());
        let s = a0 / (a0 + a1);
        return (s * a0.powf(p) + (1.0 - s) * a1.powf(p)) / (p + 1.0);
    }
    let (lo, hi) = {
        let (a0, a1) = (d0.abs(), d1.abs());
        if a0 <= a1 {
            (a0, a1)
        } else {
            (a1, a0)
        }
    };
    if hi - lo <= 1e-9 * hi {
        return (0.5 * (lo + hi)).powf(p);
    }
    (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / ((p + 1.0) * (hi - lo))
}

/// How [`wasserstein_product`] should treat large supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductMode {
    /// Exact transport; fails if a support exceeds the cap.
    Exact,
    /// Exact below the cap, upper bound above it.
    Auto,
    /// Always the coupling upper bound.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductOptions {
    /// Weight of the control coordinate in the ground cost.
    pub rho: f64,
    pub support_cap: usize,
    pub mode: ProductMode,
}

impl Default for ProductOptions {
    fn default() -> Self {
        Self { rho: 1.0, support_cap: DEFAULT_SUPPORT_CAP, mode: ProductMode::Exact }
    }
}

impl ProductOptions {
    pub fn bound() -> Self {
        Self { mode: ProductMode::Bound, ..Self::default() }
    }
}

/// Value of a product-space Wasserstein computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductDistance {
    pub value: f64,
    /// True when `value` is an upper bound rather than the optimum.
    pub is_bound: bool,
}

/// `W_p` on `R x U` with ground cost `|dx|^p + rho |du|^p`.
///
/// Exact values come from a min-cost-flow solve. The bound couples the two
/// measures monotonically along the lexicographic `(x, u)` order; being a
/// feasible coupling, it never underestimates the distance.
pub fn wasserstein_product(
    mu: &JointMeasure,
    nu: &JointMeasure,
    p: f64,
    opts: ProductOptions,
) -> Result<ProductDistance> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(MfgError::InvalidParameter(format!("Wasserstein order must be >= 1, got {p}")));
    }
    if !(opts.rho >= 0.0) {
        return Err(MfgError::InvalidParameter(format!("rho must be >= 0, got {}", opts.rho)));
    }
    let a = positive_atoms(mu);
    let b = positive_atoms(nu);
    let too_big = a.len().max(b.len());
    let exact = match opts.mode {
        ProductMode::Exact if too_big > opts.support_cap => {
            return Err(MfgError::SupportCap { atoms: too_big, cap: opts.support_cap });
        }
        ProductMode::Exact => true,
        ProductMode::Auto => too_big <= opts.support_cap,
        ProductMode::Bound => false,
    };
    let cost = |s: &JointAtom, t: &JointAtom| {
        (s.x - t.x).abs().powf(p) + opts.rho * (s.u - t.u).abs().powf(p)
    };
    let value = if exact {
        let wa: Vec<f64> = a.iter().map(|s| s.w).collect();
        let wb: Vec<f64> = b.iter().map(|t| t.w).collect();
        exact_transport_cost(&wa, &wb, |i, j| cost(&a[i], &b[j]))?.cost
    } else {
        lexicographic_coupling_cost(a, b, cost)
    };
    Ok(ProductDistance { value: value.max(0.0).powf(1.0 / p), is_bound: !exact })
}

fn positive_atoms(m: &JointMeasure) -> Vec<JointAtom> {
    m.atoms().iter().copied().filter(|a| a.w > 0.0).collect()
}

fn lex(s: &JointAtom, t: &JointAtom) -> Ordering {
    s.x.total_cmp(&t.x).then(s.u.total_cmp(&t.u))
}

fn lexicographic_coupling_cost(
    mut a: Vec<JointAtom>,
    mut b: Vec<JointAtom>,
    cost: impl Fn(&JointAtom, &JointAtom) -> f64,
) -> f64 {
    a.sort_by(lex);
    b.sort_by(lex);
    let ta: f64 = a.iter().map(|s| s.w).sum();
    let tb: f64 = b.iter().map(|s| s.w).sum();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].w / ta, b[0].w / tb);
    let mut total = 0.0;
    loop {
        let m = ra.min(rb);
        total += m * cost(&a[i], &b[j]);
        ra -= m;
        rb -= m;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].w / ta;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].w / tb;
        }
    }
    total
}

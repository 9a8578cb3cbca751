//! Cauchy-kernel mollification of relaxed controls.
//!
//! `G(x) = 1 / (π (1 + x²))` integrates to one; `G_δ(x) = G(x/δ) / δ`.
//! Smoothing a joint state-control law with `G_δ` in the state variable gives
//! a Markovian diffusion coefficient that mimics the relaxed one.

use crate::error::{MfgError, Result};
use crate::measures::JointMeasure;

/// Denominators at or below this value are treated as vanishing.
const MIN_DENOMINATOR: f64 = 1e-300;

/// `G_δ(x)`.
pub fn mollifier(x: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(MfgError::InvalidParameter(format!("mollifier width must be positive, got {delta}")));
    }
    let y = x / delta;
    Ok(1.0 / (std::f64::consts::PI * delta * (1.0 + y * y)))
}

/// `σ̄_δ(x)² = ∫ u² G_δ(x-y) m(du,dy) / ∫ G_δ(x-y) m(du,dy)`.
pub fn mollified_diffusion(x: f64, joint: &JointMeasure, delta: f64) -> Result<f64> {
    mollified_coefficient(x, joint, delta, |_, u| u * u)
}

/// Kernel-weighted conditional mean of `a(y, u)` given the state `x`.
pub fn mollified_coefficient(
    x: f64,
    joint: &JointMeasure,
    delta: f64,
    a: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for atom in joint.atoms() {
        let k = atom.w * mollifier(x - atom.x, delta)?;
        num += k * a(atom.x, atom.u);
        den += k;
    }
    if !(den > MIN_DENOMINATOR) {
        return Err(MfgError::VanishingDenominator(x));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::JointAtom;

    #[test]
    fn normalization_and_scaling() {
        assert_eq!(mollifier(0.0, 1.0).unwrap(), 1.0 / std::f64::consts::PI);
        assert!(mollifier(0.0, 0.0).is_err());
        assert!(mollifier(0.0, -1.0).is_err());
        for &(x, d) in &[(0.3, 0.1), (-2.0, 3.0), (5.0, 0.01)] {
            let lhs = mollifier(x, d).unwrap();
            let rhs = mollifier(x / d, 1.0).unwrap() / d;
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs());
        }
    }

    #[test]
    fn single_atom_and_independent_joint() {
        let j = JointMeasure::dirac(0.4, 0.6);
        for x in [-3.0, 0.0, 0.4, 10.0] {
            assert!((mollified_diffusion(x, &j, 0.2).unwrap() - 0.36).abs() < 1e-15);
        }
        let mut atoms = Vec::new();
        for &y in &[-1.0, 0.0, 2.0] {
            for &(u, w) in &[(0.1, 0.25), (0.9, 0.75)] {
                atoms.push(JointAtom { x: y, u, w: w / 3.0 });
            }
        }
        let j = JointMeasure::new(atoms).unwrap();
        let expect = 0.25 * 0.01 + 0.75 * 0.81;
        for x in [-2.0, 0.5, 3.0] {
            assert!((mollified_diffusion(x, &j, 0.7).unwrap() - expect).abs() < 1e-14);
        }
    }
}

//! Small statistics helpers for Monte Carlo experiments.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MfgError, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with standard error and a 95% normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Summary {
    /// Needs at least two samples; summation runs in slice order.
    pub fn of(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(MfgError::InsufficientRepetitions(format!(
                "a confidence interval needs at least 2 samples, got {n}"
            )));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let stderr = (var / n as f64).sqrt();
        Ok(Self { count: n, mean, stderr, ci_lo: mean - Z95 * stderr, ci_hi: mean + Z95 * stderr })
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let h = (s.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quartiles {
    pub fn of(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self { q25: quantile_sorted(&s, 0.25), median: quantile_sorted(&s, 0.5), q75: quantile_sorted(&s, 0.75) }
    }
}

/// Least-squares slope of `log y` against `log x`. `None` when a value is
/// not strictly positive or fewer than two points are given.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mann-Kendall trend test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannKendall {
    pub s: i64,
    pub z: f64,
    /// One-sided p-value against an upward trend.
    pub p_upward: f64,
}

impl MannKendall {
    /// Test statistic with the tie-corrected variance and continuity
    /// correction.
    pub fn of(series: &[f64]) -> Self {
        let n = series.len();
        let mut s = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                s += match series[j].partial_cmp(&series[i]) {
                    Some(std::cmp::Ordering::Greater) => 1,
                    Some(std::cmp::Ordering::Less) => -1,
                    _ => 0,
                };
            }
        }
        let mut sorted = series.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut ties = 0.0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * (t - 1.0) * (2.0 * t + 5.0);
            i = j + 1;
        }
        let nf = n as f64;
        let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
        let z = if var <= 0.0 || s == 0 {
            0.0
        } else if s > 0 {
            (s as f64 - 1.0) / var.sqrt()
        } else {
            (s as f64 + 1.0) / var.sqrt()
        };
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        Self { s, z, p_upward: 1.0 - normal.cdf(z) }
    }

    /// Upward trend significant at level `alpha`.
    pub fn upward(&self, alpha: f64) -> bool {
        self.p_upward < alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_and_quantiles() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(Summary::of(&[1.0]).is_err());
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((q.q25, q.median, q.q75), (2.0, 3.0, 4.0));
        assert_eq!(quantile(&[0.0, 10.0], 0.3), 3.0);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [8.0, 16.0, 32.0, 64.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(log_log_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn mann_kendall_detects_monotone_series() {
        let up = MannKendall::of(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(up.s, 15);
        assert!(up.upward(0.05));
        let down = MannKendall::of(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!(!down.upward(0.05));
        let flat = MannKendall::of(&[1.0; 6]);
        assert_eq!((flat.s, flat.z), (0, 0.0));
    }
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MfgError, Result};
use crate::fokker_planck::FpGrid;
use crate::measures::{CellGrid, TimeGrid};

/// Markov feedback control `α(t_k, x_i)` on the solver grid.
///
/// Row `k` holds the control used on `[t_k, t_{k+1})`; off the grid the
/// policy is interpolated linearly between cell centres (and between rows in
/// time) and held constant beyond the outermost centres.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    space: CellGrid,
    time: TimeGrid,
    u_lo: f64,
    u_hi: f64,
    values: Vec<f64>,
}

impl FeedbackPolicy {
    pub fn new(grid: &FpGrid, values: Vec<f64>, u_lo: f64, u_hi: f64) -> Result<Self> {
        let expected = grid.steps() * grid.cells();
        if values.len() != expected {
            return Err(MfgError::GridMismatch(format!(
                "policy has {} entries, grid needs {expected}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= u_lo && **v <= u_hi)) {
            return Err(MfgError::OutOfRange(format!("control {v} outside [{u_lo}, {u_hi}]")));
        }
        Ok(Self { space: grid.space, time: grid.time.clone(), u_lo, u_hi, values })
    }

    pub fn constant(grid: &FpGrid, u: f64, u_lo: f64, u_hi: f64) -> Result<Self> {
        Self::new(grid, vec![u; grid.steps() * grid.cells()], u_lo, u_hi)
    }

    pub fn space(&self) -> &CellGrid {
        &self.space
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.u_lo, self.u_hi)
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Control at step `k` in cell `i`; the terminal time reuses the last row.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        let k = k.min(self.steps() - 1);
        self.values[k * self.space.cells + i]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let k = k.min(self.steps() - 1);
        let m = self.space.cells;
        &self.values[k * m..(k + 1) * m]
    }

    /// Linear interpolation in `x` within row `k`.
    pub fn eval_step(&self, k: usize, x: f64) -> f64 {
        let row = self.row(k);
        let s = (x - self.space.x_lo) / self.space.dx() - 0.5;
        let last = row.len() - 1;
        if s <= 0.0 {
            return row[0];
        }
        if s >= last as f64 {
            return row[last];
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        ((1.0 - w) * row[i] + w * row[i + 1]).clamp(self.u_lo, self.u_hi)
    }

    /// Bilinear interpolation in `(t, x)`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let times = self.time.times();
        let steps = self.steps();
        if t <= times[0] {
            return self.eval_step(0, x);
        }
        if t >= times[steps - 1] {
            return self.eval_step(steps - 1, x);
        }
        let k = times.partition_point(|s| *s <= t) - 1;
        let w = (t - times[k]) / (times[k + 1] - times[k]);
        let a = self.eval_step(k, x);
        if w == 0.0 {
            return a;
        }
        ((1.0 - w) * a + w * self.eval_step(k + 1, x)).clamp(self.u_lo, self.u_hi)
    }

    /// Index of each cell's control in `mesh` (nearest mesh point).
    pub fn mesh_indices(&self, k: usize, mesh: &[f64]) -> Vec<usize> {
        self.row(k)
            .iter()
            .map(|&u| {
                let mut best = 0;
                for (j, &m) in mesh.iter().enumerate() {
                    if (m - u).abs() < (mesh[best] - u).abs() {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub(crate) fn check_grid(&self, grid: &FpGrid) -> Result<()> {
        if !self.space.same_as(&grid.space) || !self.time.same_as(&grid.time) {
            return Err(MfgError::GridMismatch("policy defined on a different grid".into()));
        }
        Ok(())
    }

    /// Comma-separated matrix, one row per time step, with a metadata header.
    pub fn to_csv(&self) -> String {
        matrix_csv("policy", &self.space, &self.time, self.steps(), &self.values, Some((self.u_lo, self.u_hi)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_csv())?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let (meta, rows) = parse_matrix(&text, "policy")?;
        let grid = FpGrid::new(meta.x_lo, meta.x_hi, meta.cells, meta.horizon, meta.steps)?;
        let (u_lo, u_hi) = meta.bounds.ok_or_else(|| MfgError::Parse("policy header lacks bounds".into()))?;
        Self::new(&grid, rows, u_lo, u_hi)
    }
}

/// Value function on `(t_k, x_i)`, `k = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    space: CellGrid,
    time: TimeGrid,
    values: Vec<f64>,
}

impl ValueGrid {
    pub(crate) fn new(grid: &FpGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), (grid.steps() + 1) * grid.cells());
        Self { space: grid.space, time: grid.time.clone(), values }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.space.cells;
        &self.values[k * m..(k + 1) * m]
    }

    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.space.cells + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_csv(&self) -> String {
        matrix_csv("value", &self.space, &self.time, self.time.steps() + 1, &self.values, None)
    }
}

fn matrix_csv(
    tag: &str,
    space: &CellGrid,
    time: &TimeGrid,
    rows: usize,
    values: &[f64],
    bounds: Option<(f64, f64)>,
) -> String {
    let mut s = format!(
        "# {tag} M={} L={} T={} x_lo={} x_hi={}",
        space.cells,
        time.steps(),
        time.horizon(),
        space.x_lo,
        space.x_hi
    );
    if let Some((lo, hi)) = bounds {
        let _ = write!(s, " u_lo={lo} u_hi={hi}");
    }
    s.push('\n');
    for k in 0..rows {
        let row = &values[k * space.cells..(k + 1) * space.cells];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

struct MatrixMeta {
    cells: usize,
    steps: usize,
    horizon: f64,
    x_lo: f64,
    x_hi: f64,
    bounds: Option<(f64, f64)>,
}

fn parse_matrix(text: &str, tag: &str) -> Result<(MatrixMeta, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().unwrap_or("");
    let rest = head
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|h| h.strip_prefix(tag))
        .ok_or_else(|| MfgError::Parse(format!("expected `# {tag}` header")))?;
    let mut get = std::collections::BTreeMap::new();
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| MfgError::Parse(format!("bad field `{kv}`")))?;
        let v: f64 = v.parse().map_err(|_| MfgError::Parse(format!("bad number `{v}`")))?;
        get.insert(k.to_string(), v);
    }
    let need = |k: &str| get.get(k).copied().ok_or_else(|| MfgError::Parse(format!("missing `{k}`")));
    let meta = MatrixMeta {
        cells: need("M")? as usize,
        steps: need("L")? as usize,
        horizon: need("T")?,
        x_lo: need("x_lo")?,
        x_hi: need("x_hi")?,
        bounds: match (get.get("u_lo"), get.get("u_hi")) {
            (Some(a), Some(b)) => Some((*a, *b)),
            _ => None,
        },
    };
    let mut values = Vec::new();
    for line in lines {
        for v in line.split(',') {
            values.push(v.trim().parse().map_err(|_| MfgError::Parse(format!("bad number `{v}`")))?);
        }
    }
    Ok((meta, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_round_trip() {
        let grid = FpGrid::new(0.0, 3.0, 3, 1.0, 2).unwrap();
        let p = FeedbackPolicy::new(&grid, vec![0.0, 0.5, 1.0, 1.0, 1.0, 1.0], 0.0, 1.0).unwrap();
        assert_eq!(p.eval_step(0, 0.5), 0.0);
        assert_eq!(p.eval_step(0, 1.0), 0.25);
        assert_eq!(p.eval_step(0, 10.0), 1.0);
        assert_eq!(p.eval(0.25, 1.0), 0.625);
        assert_eq!(p.value(2, 0), 1.0);
        assert_eq!(p.mesh_indices(0, &[0.0, 0.5, 1.0]), vec![0, 1, 2]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.write(&path).unwrap();
        assert_eq!(FeedbackPolicy::read(&path).unwrap(), p);
        assert!(FeedbackPolicy::new(&grid, vec![2.0; 6], 0.0, 1.0).is_err());
    }
}

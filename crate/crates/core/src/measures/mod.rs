//! Probability measures on the real line and on state x control space,
//! measure flows over a fixed time grid, and the Wasserstein metrics used to
//! compare them.
//!
//! Two representations of a state law coexist:
//!
//! * [`GridDensity`]: cell-averaged density on a uniform grid, the output of
//!   the Fokker-Planck solver. Mass inside a cell is spread uniformly, so the
//!   quantile function is piecewise linear.
//! * [`DiscreteMeasure`]: finitely many weighted atoms, the output of the
//!   particle simulator.
//!
//! Joint state-control laws are either sparse atom lists ([`JointMeasure`]) or
//! dense weight tables over (cell, control mesh point) ([`JointTable`]).

mod io;
mod ops;
mod transport;
mod wasserstein;

use std::sync::Arc;

use crate::error::{MfgError, Result};

pub use io::{
    read_discrete, read_flow, read_grid_density, read_joint_table, write_discrete, write_flow,
    write_grid_density, write_joint_table, FrameIo,
};
pub(crate) use ops::{cic, deposit, empirical_flow_time_major};
pub use ops::{
    empirical_flow, grid_to_particles, particles_to_grid, quantile_sample, shift_flow, Translate,
};
pub use transport::{exact_transport_cost, TransportPlan};
pub use wasserstein::{
    wasserstein_1d, wasserstein_product, ProductDistance, ProductMode, ProductOptions,
    DEFAULT_SUPPORT_CAP,
};

/// Tolerance on the total mass of a [`DiscreteMeasure`] or [`JointMeasure`].
pub const ATOM_MASS_TOL: f64 = 1e-12;
/// Tolerance on the total mass of grid-based measures.
pub const GRID_MASS_TOL: f64 = 1e-9;

/// Uniform time grid `0 = t_0 < ... < t_L = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(MfgError::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(MfgError::InvalidGrid("time grid needs at least one step".into()));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        times[steps] = horizon;
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(MfgError::InvalidGrid("time grid must start at 0 with >= 2 points".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MfgError::InvalidGrid("time grid must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Length of step `k`, i.e. `t_{k+1} - t_k`.
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.times.len() == other.times.len()
            && self.times.iter().zip(&other.times).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }
}

/// Uniform partition of `[x_lo, x_hi]` into `cells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub cells: usize,
}

impl CellGrid {
    pub fn new(x_lo: f64, x_hi: f64, cells: usize) -> Result<Self> {
        if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(MfgError::InvalidGrid(format!("need x_lo < x_hi, got [{x_lo}, {x_hi}]")));
        }
        if cells < 2 {
            return Err(MfgError::InvalidGrid(format!("need at least 2 cells, got {cells}")));
        }
        Ok(Self { x_lo, x_hi, cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    pub fn left_edge(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx()
    }

    /// Index of the cell containing `x`, clamped to the grid.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = ((x - self.x_lo) / self.dx()).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.cells - 1)
        }
    }

    pub fn same_as(&self, other: &CellGrid) -> bool {
        self.cells == other.cells
            && (self.x_lo - other.x_lo).abs() <= 1e-12 * (1.0 + self.x_lo.abs())
            && (self.x_hi - other.x_hi).abs() <= 1e-12 * (1.0 + self.x_hi.abs())
    }
}

/// One linear piece of a quantile function: on `v in [v0, v1]` the quantile
/// runs linearly from `x0` to `x1` (an atom has `x0 == x1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePiece {
    pub v0: f64,
    pub v1: f64,
    pub x0: f64,
    pub x1: f64,
}

/// A probability measure on the real line with an explicit quantile function.
pub trait Measure1d {
    /// Quantile function as consecutive linear pieces covering `[0, 1]`.
    fn quantile_pieces(&self) -> Vec<QuantilePiece>;
    fn mean(&self) -> f64;
    /// `∫ |x|^p dμ`.
    fn abs_moment(&self, p: f64) -> f64;
}

/// Finitely supported probability measure on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(MfgError::EmptyMeasure);
        }
        if points.len() != weights.len() {
            return Err(MfgError::Ragged(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(MfgError::BadWeight(w));
        }
        if let Some(&x) = points.iter().find(|x| !x.is_finite()) {
            return Err(MfgError::OutOfRange(format!("atom at {x}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > ATOM_MASS_TOL {
            return Err(MfgError::Unnormalized(total));
        }
        Ok(Self::from_parts(points, weights))
    }

    /// Normalizes `weights` before construction. Fails on zero total mass.
    pub fn normalized(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(MfgError::Unnormalized(total));
        }
        Self::new(points, weights.into_iter().map(|w| w / total).collect())
    }

    /// Equal-weight empirical measure `(1/N) Σ δ_{x_i}`.
    pub fn empirical(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(MfgError::EmptyMeasure);
        }
        if let Some(&x) = points.iter().find(|x| !x.is_finite()) {
            return Err(MfgError::OutOfRange(format!("atom at {x}")));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(Self::from_parts(points, weights))
    }

    pub fn dirac(x: f64) -> Self {
        Self::from_parts(vec![x], vec![1.0])
    }

    fn from_parts(points: Vec<f64>, weights: Vec<f64>) -> Self {
        let mean: f64 = points.iter().zip(&weights).map(|(x, w)| x * w).sum();
        let variance: f64 = points
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum();
        Self { points, weights, mean, variance }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }
}

impl Measure1d for DiscreteMeasure {
    fn quantile_pieces(&self) -> Vec<QuantilePiece> {
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| self.points[a].total_cmp(&self.points[b]));
        let total: f64 = self.weights.iter().sum();
        let mut pieces = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for i in order {
            let w = self.weights[i];
            if w <= 0.0 {
                continue;
            }
            let v0 = acc / total;
            acc += w;
            let x = self.points[i];
            pieces.push(QuantilePiece { v0, v1: acc / total, x0: x, x1: x });
        }
        if let Some(last) = pieces.last_mut() {
            last.v1 = 1.0;
        }
        pieces
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn abs_moment(&self, p: f64) -> f64 {
        self.integrate(|x| x.abs().powf(p))
    }
}

/// Cell-averaged density on a [`CellGrid`]; `Σ values[i] * dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: CellGrid,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: CellGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells {
            return Err(MfgError::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.cells
            )));
        }
        if let Some(&v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(MfgError::BadWeight(v));
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.dx();
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(MfgError::Unnormalized(mass));
        }
        Ok(Self { grid, values })
    }

    /// Builds a density from per-cell probabilities (masses).
    pub fn from_masses(grid: CellGrid, masses: &[f64]) -> Result<Self> {
        let dx = grid.dx();
        Self::new(grid, masses.iter().map(|m| m / dx).collect())
    }

    pub(crate) fn from_values_unchecked(grid: CellGrid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.values.iter().map(|v| v * dx).collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// Atoms at cell centres carrying the cell masses.
    pub fn to_discrete(&self) -> DiscreteMeasure {
        let masses = self.masses();
        let total: f64 = masses.iter().sum();
        DiscreteMeasure::from_parts(
            self.grid.centers(),
            masses.into_iter().map(|m| m / total).collect(),
        )
    }

    /// Midpoint quadrature of `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let dx = self.grid.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * dx * f(self.grid.center(i)))
            .sum()
    }

    /// Fraction of mass sitting in the two outermost cells.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.values.len();
        (self.values[0] + self.values[n - 1]) * self.grid.dx()
    }
}

impl Measure1d for GridDensity {
    fn quantile_pieces(&self) -> Vec<QuantilePiece> {
        let dx = self.grid.dx();
        let total: f64 = self.values.iter().sum::<f64>() * dx;
        let mut pieces = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let m = v * dx;
            if m <= 0.0 {
                continue;
            }
            let v0 = acc / total;
            acc += m;
            let x0 = self.grid.left_edge(i);
            pieces.push(QuantilePiece { v0, v1: acc / total, x0, x1: x0 + dx });
        }
        if let Some(last) = pieces.last_mut() {
            last.v1 = 1.0;
        }
        pieces
    }

    fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    fn abs_moment(&self, p: f64) -> f64 {
        self.integrate(|x| x.abs().powf(p))
    }
}

/// One atom `(x, u, weight)` of a joint state-control law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAtom {
    pub x: f64,
    pub u: f64,
    pub w: f64,
}

/// Finitely supported probability measure on `R x U` with cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMeasure {
    atoms: Vec<JointAtom>,
    mean_x: f64,
    mean_u: f64,
    var_x: f64,
    var_u: f64,
}

impl JointMeasure {
    pub fn new(atoms: Vec<JointAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(MfgError::EmptyMeasure);
        }
        if let Some(a) = atoms.iter().find(|a| !(a.w >= 0.0) || !a.w.is_finite()) {
            return Err(MfgError::BadWeight(a.w));
        }
        if atoms.iter().any(|a| !a.x.is_finite() || !a.u.is_finite()) {
            return Err(MfgError::OutOfRange("non-finite joint atom".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.w).sum();
        if (total - 1.0).abs() > ATOM_MASS_TOL {
            return Err(MfgError::Unnormalized(total));
        }
        Ok(Self::from_atoms_unchecked(atoms))
    }

    /// Equal weights on the pairs `(x_i, u_i)`.
    pub fn empirical(xs: &[f64], us: &[f64]) -> Result<Self> {
        if xs.len() != us.len() {
            return Err(MfgError::Ragged(format!("{} states vs {} controls", xs.len(), us.len())));
        }
        if xs.is_empty() {
            return Err(MfgError::EmptyMeasure);
        }
        let w = 1.0 / xs.len() as f64;
        Ok(Self::from_atoms_unchecked(
            xs.iter().zip(us).map(|(&x, &u)| JointAtom { x, u, w }).collect(),
        ))
    }

    pub fn dirac(x: f64, u: f64) -> Self {
        Self::from_atoms_unchecked(vec![JointAtom { x, u, w: 1.0 }])
    }

    pub(crate) fn from_atoms_unchecked(atoms: Vec<JointAtom>) -> Self {
        let total: f64 = atoms.iter().map(|a| a.w).sum();
        let mean_x = atoms.iter().map(|a| a.w * a.x).sum::<f64>() / total;
        let mean_u = atoms.iter().map(|a| a.w * a.u).sum::<f64>() / total;
        let var_x = atoms.iter().map(|a| a.w * (a.x - mean_x).powi(2)).sum::<f64>() / total;
        let var_u = atoms.iter().map(|a| a.w * (a.u - mean_u).powi(2)).sum::<f64>() / total;
        Self { atoms, mean_x, mean_u, var_x, var_u }
    }

    pub fn atoms(&self) -> &[JointAtom] {
        &self.atoms
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_u(&self) -> f64 {
        self.mean_u
    }

    pub fn var_x(&self) -> f64 {
        self.var_x
    }

    pub fn var_u(&self) -> f64 {
        self.var_u
    }

    pub fn state_marginal(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_parts(
            self.atoms.iter().map(|a| a.x).collect(),
            self.atoms.iter().map(|a| a.w).collect(),
        )
    }

    pub fn control_marginal(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_parts(
            self.atoms.iter().map(|a| a.u).collect(),
            self.atoms.iter().map(|a| a.w).collect(),
        )
    }

    pub fn translated_state(&self, h: f64) -> Self {
        Self::from_atoms_unchecked(
            self.atoms.iter().map(|a| JointAtom { x: a.x + h, ..*a }).collect(),
        )
    }
}

/// Joint weight table over `(state cell i, control mesh point j)`.
///
/// Weights are probabilities (not densities) and sum to one; the state
/// marginal of row `i` is the mass of cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    grid: CellGrid,
    controls: Arc<[f64]>,
    weights: Vec<f64>,
}

impl JointTable {
    pub fn new(grid: CellGrid, controls: Arc<[f64]>, weights: Vec<f64>) -> Result<Self> {
        if controls.is_empty() {
            return Err(MfgError::InvalidGrid("empty control mesh".into()));
        }
        if weights.len() != grid.cells * controls.len() {
            return Err(MfgError::GridMismatch(format!(
                "{} weights for {}x{} table",
                weights.len(),
                grid.cells,
                controls.len()
            )));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(MfgError::BadWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > GRID_MASS_TOL {
            return Err(MfgError::Unnormalized(total));
        }
        Ok(Self { grid, controls, weights })
    }

    /// `δ_{u(x)}(du) n(dx)`: each cell's mass placed on the control index
    /// `choice[i]`.
    pub fn from_feedback(density: &GridDensity, controls: Arc<[f64]>, choice: &[usize]) -> Self {
        let k = controls.len();
        let mut weights = vec![0.0; density.grid.cells * k];
        for (i, m) in density.masses().into_iter().enumerate() {
            weights[i * k + choice[i]] = m;
        }
        Self { grid: density.grid, controls, weights }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn controls(&self) -> &Arc<[f64]> {
        &self.controls
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.controls.len();
        &self.weights[i * k..(i + 1) * k]
    }

    /// State marginal as per-cell masses.
    pub fn state_masses(&self) -> Vec<f64> {
        (0..self.grid.cells).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn state_density(&self) -> GridDensity {
        let dx = self.grid.dx();
        GridDensity::from_values_unchecked(
            self.grid,
            self.state_masses().into_iter().map(|m| m / dx).collect(),
        )
    }

    /// Non-zero entries as atoms at cell centres.
    pub fn to_joint_measure(&self) -> JointMeasure {
        let k = self.controls.len();
        let mut atoms = Vec::new();
        for (idx, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                atoms.push(JointAtom {
                    x: self.grid.center(idx / k),
                    u: self.controls[idx % k],
                    w,
                });
            }
        }
        JointMeasure::from_atoms_unchecked(atoms)
    }

    /// Conditional control laws `m^x` per cell. Cells without mass borrow
    /// the law of the nearest cell that has mass (ties go left).
    pub fn conditional_laws(&self) -> Vec<Vec<f64>> {
        let cells = self.grid.cells;
        let masses = self.state_masses();
        let own: Vec<Option<Vec<f64>>> = (0..cells)
            .map(|i| {
                (masses[i] > 0.0).then(|| self.row(i).iter().map(|w| w / masses[i]).collect())
            })
            .collect();
        (0..cells)
            .map(|i| {
                if let Some(law) = &own[i] {
                    return law.clone();
                }
                for d in 1..cells {
                    if i >= d {
                        if let Some(law) = &own[i - d] {
                            return law.clone();
                        }
                    }
                    if i + d < cells {
                        if let Some(law) = &own[i + d] {
                            return law.clone();
                        }
                    }
                }
                // Empty table cannot happen for a normalized table.
                vec![1.0 / self.controls.len() as f64; self.controls.len()]
            })
            .collect()
    }

    /// Re-weights the conditional laws of `self` onto a new state marginal so
    /// that the result's state marginal equals `density` exactly.
    pub fn repinned(&self, density: &GridDensity) -> Self {
        let k = self.controls.len();
        let laws = self.conditional_laws();
        let mut weights = vec![0.0; self.weights.len()];
        for (i, m) in density.masses().into_iter().enumerate() {
            for j in 0..k {
                weights[i * k + j] = laws[i][j] * m;
            }
        }
        Self { grid: self.grid, controls: self.controls.clone(), weights }
    }

    /// `(1 - w) self + w other`, entrywise.
    pub fn mix(&self, other: &JointTable, w: f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) || self.controls != other.controls {
            return Err(MfgError::GridMismatch("joint tables on different meshes".into()));
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(Self { grid: self.grid, controls: self.controls.clone(), weights })
    }
}

/// Time-indexed family of measures, one frame per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow<F> {
    time: TimeGrid,
    frames: Vec<F>,
}

impl<F> Flow<F> {
    pub fn new(time: TimeGrid, frames: Vec<F>) -> Result<Self> {
        if frames.len() != time.times().len() {
            return Err(MfgError::GridMismatch(format!(
                "{} frames for {} time points",
                frames.len(),
                time.times().len()
            )));
        }
        Ok(Self { time, frames })
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &F {
        &self.frames[k]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn map<G>(&self, f: impl FnMut(&F) -> G) -> Flow<G> {
        Flow { time: self.time.clone(), frames: self.frames.iter().map(f).collect() }
    }

    pub fn into_frames(self) -> Vec<F> {
        self.frames
    }
}

/// State flow computed on a grid (Fokker-Planck output).
pub type MeasureFlow = Flow<GridDensity>;
/// Empirical state flow of a particle system.
pub type ParticleFlow = Flow<DiscreteMeasure>;
/// Joint state-control flow on a grid.
pub type JointControlFlow = Flow<JointTable>;
/// Empirical joint flow of a particle system.
pub type JointParticleFlow = Flow<JointMeasure>;

impl MeasureFlow {
    pub fn check_same_grid(&self) -> Result<()> {
        let g = self.frames[0].grid;
        if self.frames.iter().any(|f| !f.grid.same_as(&g)) {
            return Err(MfgError::GridMismatch("frames on different spatial grids".into()));
        }
        Ok(())
    }

    pub fn cell_grid(&self) -> &CellGrid {
        &self.frames[0].grid
    }

    pub fn discrete_frames(&self) -> Vec<DiscreteMeasure> {
        self.frames.iter().map(GridDensity::to_discrete).collect()
    }
}

impl JointControlFlow {
    pub fn state_flow(&self) -> MeasureFlow {
        self.map(JointTable::state_density)
    }

    pub fn joint_measures(&self) -> Vec<JointMeasure> {
        self.frames.iter().map(JointTable::to_joint_measure).collect()
    }

    /// Largest total-variation gap between each frame's state marginal and
    /// the matching frame of `flow` (zero iff the frames lie in `Z_π`).
    pub fn marginal_gap(&self, flow: &MeasureFlow) -> f64 {
        self.frames
            .iter()
            .zip(flow.frames())
            .map(|(q, n)| {
                q.state_masses()
                    .iter()
                    .zip(n.masses())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized_and_empty() {
        assert_eq!(DiscreteMeasure::new(vec![], vec![]), Err(MfgError::EmptyMeasure));
        assert!(matches!(
            DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]),
            Err(MfgError::Unnormalized(_))
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![0.0, 1.0], vec![1.5, -0.5]),
            Err(MfgError::BadWeight(_))
        ));
        let g = CellGrid::new(0.0, 1.0, 4).unwrap();
        assert!(GridDensity::new(g, vec![1.0; 4]).is_ok());
        assert!(GridDensity::new(g, vec![2.0; 4]).is_err());
        assert!(CellGrid::new(1.0, 0.0, 4).is_err());
        assert!(CellGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn cached_moments() {
        let m = DiscreteMeasure::empirical(vec![-2.0, 2.0]).unwrap();
        assert_eq!(m.mean(), 0.0);
        assert_eq!(m.variance(), 4.0);
        let j = JointMeasure::empirical(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(j.var_u(), 0.25);
        assert_eq!(j.mean_x(), 0.5);
    }

    #[test]
    fn grid_quantile_pieces_cover_unit_interval() {
        let g = CellGrid::new(-1.0, 1.0, 4).unwrap();
        let d = GridDensity::from_masses(g, &[0.25, 0.0, 0.5, 0.25]).unwrap();
        let p = d.quantile_pieces();
        assert_eq!(p.len(), 3);
        assert_eq!(p[0].v0, 0.0);
        assert_eq!(p[2].v1, 1.0);
        assert_eq!((p[1].x0, p[1].x1), (0.0, 0.5));
    }

    #[test]
    fn conditional_laws_fill_empty_rows_from_neighbours() {
        let g = CellGrid::new(0.0, 3.0, 3).unwrap();
        let controls: Arc<[f64]> = vec![0.0, 1.0].into();
        let t = JointTable::new(g, controls, vec![0.25, 0.25, 0.0, 0.0, 0.0, 0.5]).unwrap();
        let laws = t.conditional_laws();
        assert_eq!(laws[0], vec![0.5, 0.5]);
        assert_eq!(laws[1], vec![0.5, 0.5]);
        assert_eq!(laws[2], vec![0.0, 1.0]);
        let n = GridDensity::from_masses(g, &[0.2, 0.3, 0.5]).unwrap();
        let r = t.repinned(&n);
        assert_eq!(r.state_masses(), n.masses());
    }
}

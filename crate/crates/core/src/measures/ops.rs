use super::{
    CellGrid, DiscreteMeasure, Flow, GridDensity, JointAtom, JointMeasure, JointParticleFlow,
    Measure1d, ParticleFlow, TimeGrid,
};
use crate::error::{MfgError, Result};
use crate::rng;

/// Measures that can be pushed forward by a translation `y -> y + h`.
pub trait Translate: Sized {
    fn translated(&self, h: f64) -> Self;
}

impl Translate for DiscreteMeasure {
    fn translated(&self, h: f64) -> Self {
        DiscreteMeasure::from_parts(
            self.points().iter().map(|x| x + h).collect(),
            self.weights().to_vec(),
        )
    }
}

impl Translate for GridDensity {
    /// Exact pushforward: the cell layout moves with the mass.
    fn translated(&self, h: f64) -> Self {
        let g = self.grid();
        let grid = CellGrid { x_lo: g.x_lo + h, x_hi: g.x_hi + h, cells: g.cells };
        GridDensity::from_values_unchecked(grid, self.values().to_vec())
    }
}

impl Translate for JointMeasure {
    fn translated(&self, h: f64) -> Self {
        self.translated_state(h)
    }
}

/// Frame `k` of the result is frame `k` of `flow` pushed forward by
/// `y -> y + sigma0 * path[k]`.
pub fn shift_flow<F: Translate + Clone>(flow: &Flow<F>, path: &[f64], sigma0: f64) -> Result<Flow<F>> {
    if path.len() != flow.len() {
        return Err(MfgError::GridMismatch(format!(
            "path has {} samples for {} frames",
            path.len(),
            flow.len()
        )));
    }
    let frames = flow
        .frames()
        .iter()
        .zip(path)
        .map(|(f, b)| {
            let h = sigma0 * b;
            if h == 0.0 {
                f.clone()
            } else {
                f.translated(h)
            }
        })
        .collect();
    Flow::new(flow.time().clone(), frames)
}

/// Generalized inverse CDF `Φ(q)(v) = inf { u : F_q(u) > v }`.
///
/// With this convention a uniform `v` on `[0, 1)` is pushed forward to `q`,
/// and a jump of `F_q` at `v` is assigned to the atom above it, e.g. for
/// `q = ½δ_0 + ½δ_1` the value `v = 0.5` maps to `1`. `v = 1` maps to the
/// largest atom.
pub fn quantile_sample(q: &DiscreteMeasure, v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(MfgError::OutOfRange(format!("quantile level {v} outside [0, 1]")));
    }
    let pieces = q.quantile_pieces();
    for piece in &pieces {
        if piece.v1 > v {
            return Ok(piece.x0);
        }
    }
    Ok(pieces.last().map(|p| p.x1).unwrap_or(f64::NAN))
}

/// Empirical state and joint flows of `N` paths.
///
/// `states[i][k]` and `controls[i][k]` are player `i`'s state and control at
/// time `t_k`.
pub fn empirical_flow(
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
    time: &TimeGrid,
) -> Result<(ParticleFlow, JointParticleFlow)> {
    if states.is_empty() {
        return Err(MfgError::EmptyMeasure);
    }
    if states.len() != controls.len() {
        return Err(MfgError::Ragged(format!(
            "{} state paths vs {} control paths",
            states.len(),
            controls.len()
        )));
    }
    let frames = time.times().len();
    if let Some(bad) = states.iter().chain(controls).find(|p| p.len() != frames) {
        return Err(MfgError::Ragged(format!("path of length {} on {frames} times", bad.len())));
    }
    let by_time_x: Vec<Vec<f64>> = (0..frames).map(|k| states.iter().map(|p| p[k]).collect()).collect();
    let by_time_u: Vec<Vec<f64>> =
        (0..frames).map(|k| controls.iter().map(|p| p[k]).collect()).collect();
    empirical_flow_time_major(&by_time_x, &by_time_u, time)
}

/// As [`empirical_flow`] with time-major storage: `xs[k][i]`, `us[k][i]`.
pub(crate) fn empirical_flow_time_major(
    xs: &[Vec<f64>],
    us: &[Vec<f64>],
    time: &TimeGrid,
) -> Result<(ParticleFlow, JointParticleFlow)> {
    let n = xs.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(MfgError::EmptyMeasure);
    }
    let w = 1.0 / n as f64;
    let mut state_frames = Vec::with_capacity(xs.len());
    let mut joint_frames = Vec::with_capacity(xs.len());
    for (x, u) in xs.iter().zip(us) {
        if x.len() != n || u.len() != n {
            return Err(MfgError::Ragged("frames with different particle counts".into()));
        }
        if x.iter().chain(u).any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("particle state or control"));
        }
        state_frames.push(DiscreteMeasure::from_parts(x.clone(), vec![w; n]));
        joint_frames.push(JointMeasure::from_atoms_unchecked(
            x.iter().zip(u).map(|(&x, &u)| JointAtom { x, u, w }).collect(),
        ));
    }
    Ok((Flow::new(time.clone(), state_frames)?, Flow::new(time.clone(), joint_frames)?))
}

/// `count` i.i.d. samples of `d` by inverse-CDF sampling, as an empirical
/// measure. Deterministic in `seed`.
pub fn grid_to_particles(d: &GridDensity, count: usize, seed: u64) -> Result<DiscreteMeasure> {
    if count == 0 {
        return Err(MfgError::EmptyMeasure);
    }
    let pieces = d.quantile_pieces();
    if pieces.is_empty() {
        return Err(MfgError::EmptyMeasure);
    }
    let mut stream = rng::stream(seed, 0, 0);
    let points = (0..count)
        .map(|_| {
            let v = rng::uniform(&mut stream);
            let k = pieces.partition_point(|p| p.v1 <= v).min(pieces.len() - 1);
            let p = &pieces[k];
            let s = if p.v1 > p.v0 { ((v - p.v0) / (p.v1 - p.v0)).clamp(0.0, 1.0) } else { 0.5 };
            p.x0 + (p.x1 - p.x0) * s
        })
        .collect();
    DiscreteMeasure::empirical(points)
}

/// Cloud-in-cell deposit of `m` onto `grid`.
///
/// Each atom is split linearly between the two nearest cell centres, which
/// conserves mass and, for atoms between the first and last centre, the mean.
/// Atoms beyond the outer centres are deposited into the boundary cell.
pub fn particles_to_grid(m: &DiscreteMeasure, grid: &CellGrid) -> Result<GridDensity> {
    let masses = deposit(m.atoms(), grid);
    let dx = grid.dx();
    Ok(GridDensity::from_values_unchecked(*grid, masses.into_iter().map(|w| w / dx).collect()))
}

pub(crate) fn deposit(atoms: impl Iterator<Item = (f64, f64)>, grid: &CellGrid) -> Vec<f64> {
    let mut masses = vec![0.0; grid.cells];
    for (x, w) in atoms {
        for (i, f) in cic(x, grid) {
            masses[i] += w * f;
        }
    }
    masses
}

/// Cells and fractions receiving an atom at `x` under cloud-in-cell.
pub(crate) fn cic(x: f64, grid: &CellGrid) -> [(usize, f64); 2] {
    let last = grid.cells - 1;
    let s = (x - grid.x_lo) / grid.dx() - 0.5;
    if s <= 0.0 {
        [(0, 1.0), (0, 0.0)]
    } else if s >= last as f64 {
        [(last, 1.0), (last, 0.0)]
    } else {
        let i = s.floor() as usize;
        let frac = s - i as f64;
        [(i, 1.0 - frac), (i + 1, frac)]
    }
}

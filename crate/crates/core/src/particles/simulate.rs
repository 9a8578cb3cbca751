use crate::best_response::FeedbackPolicy;
use crate::error::{MfgError, Result};
use crate::measures::{
    empirical_flow_time_major, DiscreteMeasure, JointMeasure, JointParticleFlow, ParticleFlow, TimeGrid,
};
use crate::model::{FlowHistory, Frames, ModelSpec, Moments};
use crate::rng::{self, COMMON_NOISE_STREAM};

/// Assignment of feedback policies to players.
#[derive(Debug, Clone, Copy)]
pub enum Profile<'a> {
    /// Everyone plays the same policy.
    Symmetric(&'a FeedbackPolicy),
    /// Everyone plays `base` except `player`, who plays `policy`.
    Deviation { base: &'a FeedbackPolicy, player: usize, policy: &'a FeedbackPolicy },
    /// Player `i` plays `policies[i]`.
    PerPlayer(&'a [FeedbackPolicy]),
}

impl<'a> Profile<'a> {
    pub fn policy(&self, i: usize) -> &'a FeedbackPolicy {
        match *self {
            Profile::Symmetric(p) => p,
            Profile::Deviation { base, player, policy } => {
                if i == player {
                    policy
                } else {
                    base
                }
            }
            Profile::PerPlayer(ps) => &ps[i],
        }
    }

    fn check(&self, players: usize, time: &TimeGrid) -> Result<()> {
        let policies: Vec<&FeedbackPolicy> = match *self {
            Profile::Symmetric(p) => vec![p],
            Profile::Deviation { base, player, policy } => {
                if player >= players {
                    return Err(MfgError::OutOfRange(format!("deviating player {player} of {players}")));
                }
                vec![base, policy]
            }
            Profile::PerPlayer(ps) => {
                if ps.len() != players {
                    return Err(MfgError::Ragged(format!("{} policies for {players} players", ps.len())));
                }
                ps.iter().collect()
            }
        };
        if policies.iter().any(|p| !p.time().same_as(time)) {
            return Err(MfgError::GridMismatch("policy defined on another time grid".into()));
        }
        Ok(())
    }
}

/// One realisation of the `N`-player game.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub players: usize,
    pub seed: u64,
    pub repetition: u64,
    pub time: TimeGrid,
    /// `states[k][i]`: player `i` at `t_k`.
    pub states: Vec<Vec<f64>>,
    /// `controls[k][i]`: control of player `i` at `t_k`.
    pub controls: Vec<Vec<f64>>,
    /// Common Brownian path `B_{t_k}`; all zeros when `σ0 = 0`.
    pub common_noise: Vec<f64>,
    pub state_flow: ParticleFlow,
    pub joint_flow: JointParticleFlow,
}

impl SimulationRun {
    /// Path of player `i`.
    pub fn path(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|row| row[i]).collect()
    }

    pub fn control_path(&self, i: usize) -> Vec<f64> {
        self.controls.iter().map(|row| row[i]).collect()
    }
}

/// Noise of one player: initial state and standard normal increments.
struct PlayerNoise {
    rng: rand_chacha::ChaCha8Rng,
}

impl PlayerNoise {
    fn new(seed: u64, repetition: u64, player: usize) -> Self {
        Self { rng: rng::stream(seed, repetition, player as u64) }
    }

    fn initial(&mut self, model: &ModelSpec) -> f64 {
        model.nu.sample(rng::uniform(&mut self.rng))
    }

    fn normal(&mut self) -> f64 {
        rng::normal(&mut self.rng)
    }
}

/// Standard Brownian path on `time`, or zeros when the model has no common
/// noise.
fn common_path(model: &ModelSpec, seed: u64, repetition: u64, time: &TimeGrid) -> Vec<f64> {
    let mut path = vec![0.0; time.times().len()];
    if model.sigma0 == 0.0 {
        return path;
    }
    let mut rng = rng::stream(seed, repetition, COMMON_NOISE_STREAM);
    for k in 0..time.steps() {
        path[k + 1] = path[k] + time.dt(k).sqrt() * rng::normal(&mut rng);
    }
    path
}

/// Drift and volatility of one player.
fn coefficients(model: &ModelSpec, t: f64, x: f64, pi: &FlowHistory, b_star: f64, a_star: f64, u: f64) -> (f64, f64) {
    let b = (model.b_circ)(t, x, pi, u) + b_star;
    let a = (model.a_circ)(t, x, pi, u) + a_star;
    (b, a.max(0.0).sqrt())
}

/// Euler-Maruyama simulation of the `N`-player game.
///
/// Player `i` draws from the stream `(seed, repetition, i)`: first a uniform
/// for its initial state (inverse CDF of `ν`), then one normal per step. The
/// common noise has its own stream. Coefficients see the running empirical
/// state flow and the current empirical joint law.
pub fn simulate_profile(
    model: &ModelSpec,
    profile: &Profile,
    players: usize,
    seed: u64,
    repetition: u64,
    time: &TimeGrid,
) -> Result<SimulationRun> {
    if players == 0 {
        return Err(MfgError::InvalidParameter("at least one player is needed".into()));
    }
    profile.check(players, time)?;
    let times = time.times();
    let steps = time.steps();
    let mut noise: Vec<PlayerNoise> = (0..players).map(|i| PlayerNoise::new(seed, repetition, i)).collect();
    let common = common_path(model, seed, repetition, time);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut frames: Vec<DiscreteMeasure> = Vec::with_capacity(steps + 1);
    let mut moments: Vec<Moments> = Vec::with_capacity(steps + 1);
    let mut x: Vec<f64> = noise.iter_mut().map(|n| n.initial(model)).collect();
    for k in 0..=steps {
        let t = times[k];
        let u: Vec<f64> = (0..players).map(|i| profile.policy(i).eval(t, x[i])).collect();
        let frame = DiscreteMeasure::empirical(x.clone())?;
        moments.push(Moments::of(&frame));
        frames.push(frame);
        states.push(x.clone());
        controls.push(u.clone());
        if k == steps {
            break;
        }
        let pi = FlowHistory::new(&times[..=k], Frames::Atoms(&frames), &moments);
        let m = JointMeasure::empirical(&x, &u)?;
        let b_star = (model.b_star)(t, &pi, &m);
        let a_star = (model.a_star)(t, &pi, &m);
        let dt = time.dt(k);
        let sq = dt.sqrt();
        let db = model.sigma0 * (common[k + 1] - common[k]);
        for i in 0..players {
            let (b, s) = coefficients(model, t, x[i], &pi, b_star, a_star, u[i]);
            x[i] += b * dt + s * sq * noise[i].normal() + db;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("particle state"));
        }
    }
    let (state_flow, joint_flow) = empirical_flow_time_major(&states, &controls, time)?;
    Ok(SimulationRun {
        players,
        seed,
        repetition,
        time: time.clone(),
        states,
        controls,
        common_noise: common,
        state_flow,
        joint_flow,
    })
}

/// Path of player `player` of `run` replayed with `policy` while the
/// population flows stay frozen at those of `run`.
///
/// The replay reuses the player's own noise stream and the common noise, so
/// with `policy` equal to the player's original policy it reproduces the
/// original path.
pub fn simulate_frozen(
    model: &ModelSpec,
    policy: &FeedbackPolicy,
    run: &SimulationRun,
    player: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if player >= run.players {
        return Err(MfgError::OutOfRange(format!("player {player} of {}", run.players)));
    }
    if !policy.time().same_as(&run.time) {
        return Err(MfgError::GridMismatch("policy uses another time grid".into()));
    }
    let time = &run.time;
    let times = time.times();
    let frames = run.state_flow.frames();
    let moments: Vec<Moments> = frames.iter().map(Moments::of).collect();
    let mut noise = PlayerNoise::new(run.seed, run.repetition, player);
    let mut z = noise.initial(model);
    let mut path = Vec::with_capacity(times.len());
    let mut ctrl = Vec::with_capacity(times.len());
    for k in 0..=time.steps() {
        let t = times[k];
        let u = policy.eval(t, z);
        path.push(z);
        ctrl.push(u);
        if k == time.steps() {
            break;
        }
        let pi = FlowHistory::new(&times[..=k], Frames::Atoms(&frames[..=k]), &moments[..=k]);
        let m = run.joint_flow.frame(k);
        let b_star = (model.b_star)(t, &pi, m);
        let a_star = (model.a_star)(t, &pi, m);
        let dt = time.dt(k);
        let (b, s) = coefficients(model, t, z, &pi, b_star, a_star, u);
        z += b * dt + s * dt.sqrt() * noise.normal() + model.sigma0 * (run.common_noise[k + 1] - run.common_noise[k]);
        if !z.is_finite() {
            return Err(MfgError::NonFinite("frozen-flow path"));
        }
    }
    Ok((path, ctrl))
}

/// Reward of player `i`: left-endpoint sum of the running reward plus the
/// terminal reward, against the run's empirical flows.
pub fn estimate_reward(model: &ModelSpec, run: &SimulationRun, i: usize) -> Result<f64> {
    if i >= run.players {
        return Err(MfgError::OutOfRange(format!("player {i} of {}", run.players)));
    }
    path_reward(model, run, &run.path(i), &run.control_path(i))
}

/// Reward of an arbitrary path against the empirical flows of `run`.
pub fn path_reward(model: &ModelSpec, run: &SimulationRun, path: &[f64], controls: &[f64]) -> Result<f64> {
    let time = &run.time;
    let times = time.times();
    let frames = run.state_flow.frames();
    let moments: Vec<Moments> = frames.iter().map(Moments::of).collect();
    let mut total = 0.0;
    for k in 0..time.steps() {
        let pi = FlowHistory::new(&times[..=k], Frames::Atoms(&frames[..=k]), &moments[..=k]);
        let m = run.joint_flow.frame(k);
        total += time.dt(k) * model.running_reward(times[k], path[k], &pi, m, controls[k]);
    }
    let full = FlowHistory::new(times, Frames::Atoms(frames), &moments);
    total += (model.g)(path[time.steps()], &full);
    if !total.is_finite() {
        return Err(MfgError::NonFinite("player reward"));
    }
    Ok(total)
}

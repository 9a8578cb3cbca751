//! `N`-player games driven by feedback policies, and the experiments that
//! compare them with their mean-field limit.
//!
//! All randomness is keyed by `(seed, repetition, player)`, and repetitions
//! are reduced in a fixed order, so results do not depend on the number of
//! worker threads.

mod experiments;
mod simulate;
pub mod stats;

pub use experiments::{
    convergence_to_mfg, deviation_experiment, nash_csv, nash_gap, ConvergenceRow, ConvergenceTable,
    DeviationRow, DeviationStats, NashEstimate, Verdict, MIN_REPETITIONS,
};
pub use simulate::{
    estimate_reward, path_reward, simulate_frozen, simulate_profile, Profile, SimulationRun,
};

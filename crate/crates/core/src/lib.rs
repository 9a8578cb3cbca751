//! Numerical toolkit for mean field games of controls.
//!
//! The crate computes approximate measure-valued equilibria of separable
//! mean field games of controls on a one-dimensional state grid and checks
//! them against simulated N-player games:
//!
//! * [`measures`]: measures, flows, Wasserstein distances, sampling;
//! * [`model`]: separable model specification, validation, built-in models;
//! * [`fokker_planck`]: forward Kolmogorov solver and residual checks;
//! * [`best_response`]: dynamic programming against frozen flows;
//! * [`fixed_point`]: fictitious-play equilibrium search and certificates;
//! * [`particles`]: N-player simulation and limit experiments.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the out-of-range
// values. Time-step loops index several parallel arrays by `k`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod best_response;
pub mod error;
pub mod fixed_point;
pub mod fokker_planck;
pub mod measures;
pub mod model;
pub mod particles;
pub mod rng;

pub use error::{MfgError, Result};
pub use measures::{
    CellGrid, DiscreteMeasure, Flow, GridDensity, JointAtom, JointControlFlow, JointMeasure,
    JointParticleFlow, JointTable, Measure1d, MeasureFlow, ParticleFlow, TimeGrid,
};

//! Closed-loop simulation of model reference-based control for uncertain
//! strict-feedback systems.
//!
//! The controller has two layers. Homogeneous adaptive estimators ([`hae`])
//! keep a certain reference model matched to the uncertain plant
//! ([`plant`]); a barrier-constrained feedforward controller ([`hacblf`])
//! drives that reference model along a desired trajectory inside
//! prescribed performance envelopes, under input saturation. [`simulation`]
//! integrates everything with fixed-step RK4, [`analysis`] re-checks the
//! Lyapunov bounds along the recorded [`trace`], and [`sweep`] runs
//! parameter-sensitivity grids.

// `!(a > b)` is used throughout so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod hacblf;
pub mod hae;
pub mod plant;
pub mod plot;
pub mod scenario;
pub mod simulation;
pub mod sweep;
pub mod trace;

pub use analysis::{analyze, FreeConstants, StabilityReport};
pub use scenario::{ScenarioConfig, TrajectorySpec};
pub use simulation::{RunOutcome, Simulation, Verdict};
pub use trace::Trace;

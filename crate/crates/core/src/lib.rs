//! SDRE tracking control and motor-compatible velocity parameterization
//! for a planar two-link leg.
//!
//! The pipeline:
//!
//! 1. [`gait`] loads or synthesizes a hip/knee angle profile and derives
//!    velocities and accelerations.
//! 2. [`sdre`] tracks it with a state-dependent Riccati controller on the
//!    leg model of [`dynamics`], solving a continuous algebraic Riccati
//!    equation ([`riccati`]) at every control step.
//! 3. [`param`] fits piecewise-linear velocity commands (ramp, then hold)
//!    between characteristic times so that their inverse-dynamics torque
//!    matches the tracking torque.
//! 4. [`report`] compares both against the recorded motion.
//!
//! [`commands`] strings these together the way the `sdre-gait` binary does,
//! configured by a [`config::RunConfig`].

pub mod commands;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gait;
pub mod nelder_mead;
pub mod param;
pub mod report;
pub mod riccati;
pub mod sdre;

pub use config::RunConfig;
pub use dynamics::{JointState, LegParams};
pub use error::{Error, Result};
pub use gait::GaitProfile;
pub use param::{LegPlan, VelocityPlan};
pub use sdre::{simulate_tracking, ControlGains, SimOptions, TrackingResult};

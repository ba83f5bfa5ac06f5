//! Gaussian-state simulator for the continuous-variable coherent Ising machine
//! (CV-CIM) applied to box-constrained quadratic programs.
//!
//! The measurement-feedback term of the machine is pluggable: plain gradient
//! descent, heavy-ball momentum, or Adam. Everything needed to benchmark the
//! three against each other lives here:
//!
//! - [`boxqp`]: the problem model and the amplitude to box-variable mapping.
//! - [`instances`]: instance files, the conditioned random generator, and
//!   reference-optimum oracles.
//! - [`feedback`]: the feedback policies.
//! - [`dynamics`]: schedules and the Euler-Maruyama integrator.
//! - [`metrics`]: optimality gaps, percentiles, roundtrip ratios, time-to-target.

pub mod boxqp;
pub mod dynamics;
mod error;
pub mod feedback;
pub mod instances;
pub mod metrics;
pub mod rng;

pub use boxqp::{AmplitudeDomain, BoxPoint, BoxQpInstance, FeedbackScaling};
pub use dynamics::{simulate, CimParams, GapRecord, GapSeries, Stepper, TrajectoryState};
pub use error::{Error, Result};
pub use feedback::{PolicyConfig, PolicyState};

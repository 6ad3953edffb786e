//! Distributed safe region formation control for double-integrator agents.
//!
//! Each agent combines a nominal controller (formation potential, velocity
//! consensus through a relative velocity estimator, region seeking and
//! reference velocity tracking) with a per-agent QP safety filter built from
//! exponential control barrier constraints. [`sim`] closes the loop and
//! [`cli`] drives scenario files end to end.

pub mod cbf;
pub mod cli;
pub mod geometry;
pub mod nominal;
pub mod plot;
pub mod qp;
pub mod sim;
pub mod world;

pub use geometry::{ConvexRegion, Vec2};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use sim::{run, RunFailure, SimError, StepRecord, TrajectoryLog};
pub use world::{ControllerParams, ReferenceVelocity, Scenario, World};

//! Evacuation on the line by agents with asymmetric wireless capabilities.
//!
//! Senders can broadcast but only hear face-to-face; receivers hear broadcasts
//! but only speak face-to-face. This crate builds the search plans for the
//! one-sender/one-receiver, one-sender/many-receiver and many-sender/one-receiver
//! settings as exact piecewise-linear trajectories, simulates the
//! post-discovery notification and evacuation, and measures competitive ratios
//! by sweeps, closed forms and one-dimensional optimisation.

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod engine;
pub mod plans;
pub mod scalar;
pub mod trajectory;

pub use engine::{analytic_evac_time, simulate, EngineError, EvacOutcome};
pub use plans::{AgentId, AgentSpec, Capability, EvacPlan, PlanKind, ReactionPolicy};
pub use scalar::Scalar;
pub use trajectory::{Direction, RaysParams, Terminal, Trajectory, TrajectoryError, TurningPoint};

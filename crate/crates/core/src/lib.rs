//! Kinetic simulation of evolutionary games played in mixed strategies.
//!
//! Agents hold mixed strategies (points of the probability simplex) and
//! update them through pairwise plays of a symmetric zero-sum game. The crate
//! provides three levels of description of the same population:
//!
//! - [`micro`]: the finite-N jump process, pairs of agents meeting at Poisson
//!   times and nudging their strategies toward the winning pure strategy;
//! - [`meanfield`]: the small-step limit of that process, a nonlocal transport
//!   equation solved with weighted particles along characteristics;
//! - [`replicator`]: the replicator ODE, which governs the population mean
//!   while the support stays on the plateau of the step function.
//!
//! [`metrics`] measures distances between strategy distributions and
//! [`experiments`] binds everything into reproducible runs driven by JSON
//! configuration files.

pub mod error;
pub mod experiments;
pub mod game;
pub mod meanfield;
pub mod metrics;
pub mod micro;
pub mod ode;
pub mod replicator;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use game::{PayoffMatrix, SimplexPoint, StepFunction};

//! Derivative-free actor-critic tuning for parameterized controllers.
//!
//! The crate is organized around a small set of contracts:
//!
//! * [`param_space`] maps a user-defined box of controller parameters onto the
//!   normalized cube `[-1, 1]^d` in which all search happens.
//! * [`env`] defines the [`Environment`](env::Environment) and
//!   [`Controller`](env::Controller) traits plus rollout and evaluation helpers.
//! * [`critic`] holds the value network, GAE targets and advantages.
//! * [`zoac`] implements the trainer (timestep-wise parameter perturbation with
//!   a learned critic) and a vanilla evolution-strategies baseline.
//! * [`acc`], [`tracking`] and [`toy`] are the benchmark tasks.

pub mod acc;
pub mod adam;
pub mod checkpoint;
pub mod critic;
pub mod env;
pub mod error;
pub mod param_space;
pub mod rng;
pub mod tasks;
pub mod toy;
pub mod tracking;
pub mod zoac;

pub use error::{Diagnostics, Error, Result};

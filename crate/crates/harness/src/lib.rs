//! Experiment harness: configuration, task registry, run logs and the
//! `tune`, `evaluate`, `landscape` and `compare` commands behind the `zoac` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod registry;
pub mod runlog;

pub use config::{ExperimentConfig, Method, TaskId};
pub use error::{HarnessError, Result};

//! Configuration-driven experiment runner for `qvix-core`.
//!
//! A JSON config describes the grid, operator, obstacle map, forcing and
//! direction; [`runner::run_experiment`] computes the requested extremal
//! solutions and derivative, and [`report::emit_report`] writes CSV tables
//! plus a JSON summary.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use report::emit_report;
pub use runner::{run_experiment, run_oracle, RunArtifacts};

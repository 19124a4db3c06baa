//! Config-driven experiment runner for the `hbmecc` simulator.
//!
//! A run reads one TOML config, expands its parameter grid, executes every
//! point (in parallel when allowed) and writes a single sorted CSV.

pub mod config;
pub mod fmt;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig};
pub use run::{run_config, write_atomic, Output};

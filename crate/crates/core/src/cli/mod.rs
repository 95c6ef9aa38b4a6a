//! Experiment driver: configuration files and the command implementations.

pub mod commands;
pub mod config;

pub use commands::{repeat_seed, run_config, run_experiment, tune, verify_theory, ExperimentOutcome, Overrides};
pub use config::{AnyTarget, ExperimentConfig, TheoryConfig, TuneConfig};

//! Experiment plumbing: config files, run orchestration, reports, CLI.

pub mod cli;
pub mod config;
pub mod report;
pub mod runner;

pub use config::{Algorithm, ExperimentConfig, InstanceSpec};
pub use runner::{run_experiment, RunArtifacts};

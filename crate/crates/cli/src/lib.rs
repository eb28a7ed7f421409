//! Experiment configuration and runner behind the `aptomo` binary.

pub mod config;
pub mod image;
pub mod runner;

pub use config::{ExperimentConfig, Method};
pub use runner::{run_experiment, simulate, Simulation, Summary};

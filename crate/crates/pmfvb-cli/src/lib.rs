//! Library surface of the experiment runner; the binary in `main.rs`
//! is a thin clap front-end over these modules.

pub mod config;
pub mod data;
pub mod runner;
pub mod sweep;

pub use config::{load_config, Experiment, ExperimentConfig, Method, Overrides};
pub use runner::{run_experiment, CliError, CliResult, RunOutput};

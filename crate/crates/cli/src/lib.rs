//! Configuration, sweeps and reporting for the `osc` command-line tool.

pub mod config;
pub mod error;
pub mod sweep;
pub mod tools;

pub use config::{parse_config, parse_config_str, ExperimentSpec};
pub use error::CliError;

//! Batch front end: TOML configs in, CSV tables and a text report out.

pub mod config;
pub mod demos;
pub mod run;

pub use config::{load_config, parse_config, Analysis, ConfigError, RunConfig};
pub use run::{run, CliError, RunOutputs};

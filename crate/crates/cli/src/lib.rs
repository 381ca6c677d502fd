//! Experiment harness for `stark-core`: configuration, pipelines and reports.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use run::{exit_code, loglog_slope, run, Report, Subcommand};

//! Pipelines, configuration and persistence behind the `stochot` binary.
//!
//! Each subcommand reads one TOML file (plus `key.path=value` overrides),
//! runs an experiment on top of the `stochot` library and writes CSV tables,
//! JSON checkpoints and a `report.json` with the resolved configuration.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod knn;
pub mod pipelines;
pub mod report;

pub use error::{CliError, CliResult};

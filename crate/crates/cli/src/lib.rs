//! Experiment driver: INI configs, single runs, grid sweeps and RPD tables.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ConfigError, ExperimentConfig, PredictorKind, RawConfig, WorkloadSource};
pub use experiment::{run_experiment, run_repetition, sweep, CliError, ExperimentOutput, Repetition};
pub use output::{compare, RpdTable, Row};

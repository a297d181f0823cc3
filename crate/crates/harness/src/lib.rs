//! Config-driven horizon sweeps over mentorcore stacks.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;

pub use config::{ConfigError, EnvironmentConfig, ExperimentConfig, LayerConfig, ParamRule, SCHEMA_VERSION};
pub use experiment::{build_stack, run_experiment, Environment, ExperimentError, ResultRow, RunOptions};
pub use report::{csv_string, fit_and_report, read_csv, write_csv, MetricSummary, Summary};

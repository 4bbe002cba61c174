//! Experiment configurations, drivers and run output for `roughflow`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind, InitialCondition, SigmaSpec, Tolerances};
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, Check, Report, Table};
pub use output::write_report;

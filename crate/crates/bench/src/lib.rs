//! Experiment orchestration for the CV-CIM simulator: declarative configs,
//! parallel trajectory grids and deterministic output tables.

pub mod config;
pub mod oracle;
pub mod output;
pub mod ratio;
pub mod runner;

pub use config::{ExperimentConfig, Mode};
pub use runner::{cmd_run, cmd_sweep, Overrides};

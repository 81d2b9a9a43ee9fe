//! Experiment configs, sweeps and result files.

pub mod config;
pub mod sweep;

pub use config::{ChannelSpec, ExperimentConfig, GotSpec, PreparedExperiment, ProcessSpec, SweepParameter};
pub use sweep::{preset_name, quantile, run_sweep, ResultRow, SummaryRow, SweepResults, SweepSpec};

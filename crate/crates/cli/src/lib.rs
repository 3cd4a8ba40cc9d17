//! Benchmark harness around the `rsmote` library: experiment configs, a
//! process-per-run scheduler, summaries and plots.

pub mod config;
pub mod oracles;
pub mod plot;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, RunSettings, ScheduleSection};
pub use runner::{execute_run, run_experiments, ExperimentReport, RunOptions, SummaryRow};

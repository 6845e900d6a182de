//! Experiment harness: configs, seeded multi-run orchestration, CSV/SVG
//! output, built-in figure configs and the `gtdlab` command line.

pub mod checks;
pub mod cli;
pub mod config;
pub mod figures;
pub mod output;
pub mod runner;

pub use config::{load_config, parse_config, AlgorithmSpec, ConfigError, ExperimentConfig, PlotSpec};
pub use runner::{run_experiment, ExperimentResult, RunSeries};

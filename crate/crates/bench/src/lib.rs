//! Experiment driver for `coreplan`: builds instances, runs the exact and
//! stochastic planners over seeded trials, checks the bounds and writes
//! CSV, JSON and SVG output.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod stats;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, RunReport};

//! Experiment runner for the UAV edge-computing learners: JSON configuration,
//! training and comparison runs, evaluation, behavior replays, CSV/SVG output
//! and digest-carrying run manifests.

pub mod config;
mod error;
pub mod output;
pub mod plot;
pub mod run;

pub use config::{BehaviorConfig, ExperimentConfig};
pub use error::{BenchError, Result};

//! Batch runner, configuration files, result export and the `levelsplit`
//! command line on top of [`levelsplit_core`].

pub mod batch;
pub mod commands;
pub mod config;
pub mod report;

pub use batch::{run_batch, run_timed_batch};
pub use config::ExperimentConfig;

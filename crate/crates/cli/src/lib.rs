//! Command-line orchestration of the latsel pipeline: stage commands,
//! end-to-end runs, ablation sweeps and their reports.

pub mod ablate;
pub mod cli;
pub mod config;
mod error;
pub mod pipeline;
pub mod results;

pub use error::{CliError, CliResult, StageContext};

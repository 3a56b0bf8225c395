//! Experiment runner for `shufflelab-core`: TOML configs, a rayon worker
//! pool, CSV/JSON outputs, verification suites and the `shufflelab` CLI.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod suites;

pub use error::{LabError, Result};

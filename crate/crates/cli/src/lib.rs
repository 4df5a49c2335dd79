//! Library surface of the benchmark harness; the binary in `main.rs` is a
//! thin argument-parsing shell over these commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod manifest;
pub mod results;

pub use config::{ExperimentConfig, MethodSpec};

//! Batch commands for the yieldcast pipeline.

pub mod commands;
pub mod config;

pub use commands::{cmd_compare, cmd_evaluate, cmd_features, cmd_ingest, cmd_synth};
pub use config::{ModelEntry, Paths, RunConfig};

//! Configuration, orchestration and file output for the `oddpert` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

/// Environment variable selecting the worker count.
pub const WORKERS_VAR: &str = "ODDPERT_WORKERS";

//! Configuration and command implementations behind the `glnn` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{Preset, RunConfig};
pub use error::CliError;

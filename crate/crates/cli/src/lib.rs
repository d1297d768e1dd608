//! Pipeline commands behind the `wbc` binary: `prepare`, `train`,
//! `evaluate` and `explain`, plus the config file format, checkpoint format
//! and report writers they share.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod fsutil;
pub mod plot;
pub mod raster;

pub use config::{Overrides, Preset, RunConfig};
pub use error::{CliError, Result};

//! File formats, configuration and experiment commands on top of
//! `latentgeo-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pgm;
pub mod report;

pub use error::{CliError, CliResult};
pub use latentgeo_core as core;

//! Command-line front end: configuration files, presets, run directories and
//! plot data.

pub mod config;
pub mod error;
pub mod plotdata;
pub mod presets;
pub mod run;

pub use error::{CliError, Result};

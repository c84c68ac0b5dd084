//! File formats, configuration and subcommands of the `reifcal` tool.
//!
//! The numerical work lives in `reifcal-core`; this crate reads clouds and
//! forms, runs the requested analysis and writes reports, surfaces and
//! plots.
pub mod commands;
pub mod config;
pub mod diagnostic;
pub mod io;
pub mod plot;
pub mod report;

pub use commands::{run, Outcome};
pub use config::{Command, Flags, RunConfig};

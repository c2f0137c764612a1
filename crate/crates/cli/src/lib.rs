//! Command-line front end: run specifications, experiment jobs, reports and
//! plots.

pub mod commands;
pub mod error;
pub mod plot;
pub mod runner;
pub mod spec;

pub use error::CliError;
pub use spec::RunSpec;

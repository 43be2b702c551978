//! Configuration, verification suites and reports for the `cslab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod suites;

pub use config::{Overrides, RunConfig, Suite};
pub use error::CliError;
pub use report::Report;
pub use suites::run_suite;

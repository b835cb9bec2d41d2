//! File formats, reports, parallel experiment drivers and the `ddevd`
//! command-line tool built on `ddevd-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;

pub use cli::{run_command, Outcome, EXIT_DIAGNOSTICS, EXIT_ERROR, EXIT_OK};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

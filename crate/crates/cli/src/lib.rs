//! Command-line front end: argument parsing, file layout and the
//! experiment presets. Exit statuses are 1 for input errors, 2 for
//! numerical failures and 3 for diagnostics warnings under `--strict`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pipeline;

pub use cli::Cli;
pub use commands::run;
pub use error::{CliError, CliResult};

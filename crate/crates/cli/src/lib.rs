//! Command-line front end for `gridsmooth`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::run;
pub use config::{parse_args, RunConfig};
pub use error::CliError;

//! Library side of the `kmon` command-line tool.

pub mod commands;
pub mod config;
pub mod input;

pub use config::{parse_kernel, RunConfig, SchemeName};
pub use input::{parse_csv, parse_csv_str};

//! Library half of the `thg` binary: config parsing, checkpoints and the
//! subcommands, kept here so integration tests can call them directly.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod run;

pub use error::CliError;

//! Config-driven front end: derivations, simulations and campaigns written
//! to an output directory with a hashed manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod reference;

pub use commands::{cmd_derive, run, Command, DeriveDoc, RunSummary};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

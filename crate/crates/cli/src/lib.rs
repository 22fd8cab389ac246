//! Library side of the `hisecagg` command: configuration parsing and the
//! subcommands, each returning its report and exit code.

pub mod commands;
pub mod config;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Infeasible parameters, unreadable input or a violated precondition.
    pub const PRECONDITION: u8 = 2;
    pub const CONSTRUCTION: u8 = 3;
    pub const SECURITY: u8 = 4;
    pub const DECODE: u8 = 5;
    pub const FIXTURE: u8 = 6;
}

pub use commands::{CliError, Input, Output, RunRequest};
pub use config::{Overrides, ScenarioConfig};

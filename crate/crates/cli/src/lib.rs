//! Scenario files and subcommands of the `kasamawashi` binary.

pub mod commands;
pub mod scenario;

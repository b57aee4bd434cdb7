//! Library side of the `msf` binary: run configuration and the commands.

pub mod commands;
pub mod config;

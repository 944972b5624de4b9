//! Library surface of the command-line runner; the binary in `main.rs` is a
//! thin wrapper so integration tests can drive commands in process.

pub mod commands;
pub mod config;
pub mod output;

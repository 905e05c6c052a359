//! Pieces of the `dkg` command-line tool that are usable without a process.

pub mod config;
pub mod repl;

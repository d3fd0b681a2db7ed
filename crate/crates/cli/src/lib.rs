//! CLI companion crate: run configuration, on-disk artifact formats, and
//! the subcommand implementations behind the `widepth` binary.

pub mod config;
pub mod formats;
pub mod pipeline;

//! Command-line tool and file formats for `hardiclass-core`.
//!
//! Volumes are stored as a JSON sidecar plus a raw little-endian blob (see
//! [`io`]); kernel banks, models and reports are JSON. Every subcommand writes
//! a [`manifest::RunManifest`] with SHA-256 checksums of its outputs.

pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod render;

pub use error::{CliError, CliResult};

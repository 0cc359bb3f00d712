//! Std companion to `qstein-core`: a rayon executor, CSV/JSON file formats,
//! the experiment suite and the `qstein` command-line tool.

pub mod cli;
pub mod exec;
pub mod experiments;
pub mod io;
pub mod verify;

pub use qstein_core as core;

//! Command-line front end, file formats and wall-clock profiling for
//! [`lightspeech_core`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod evallog;
pub mod files;
pub mod hooks;
pub mod manifest;
pub mod profile;
pub mod render;
pub mod weights;

pub use error::{CliError, CliResult};

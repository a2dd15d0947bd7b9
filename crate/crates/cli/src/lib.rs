//! File formats, synthetic data and the command-line surface of the
//! biosignal decoding toolkit.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod fsio;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{CliError, CliResult};

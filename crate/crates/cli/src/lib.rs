//! The `pgfn` pipeline: synthetic data, embedder, samplers, oracle,
//! evaluation and the cross-run report.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{RunConfig, SamplerMethod};
pub use error::CliError;

//! Experiment runner for `tnhvp`: TOML configuration, artifact formats and the
//! `run` / `eval` / `spectrum` / `check-derivatives` pipelines behind the
//! `tnhvp` binary.

pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use exec::PoolExecutor;

//! Configuration, orchestration, caching and CSV output around `ksm-core`.

pub mod cache;
pub mod config;
pub mod pipeline;
pub mod table;

pub use config::{parse_config, preset, ConfigError, RunConfig};
pub use pipeline::{Pipeline, PipelineError, Report, Verb};

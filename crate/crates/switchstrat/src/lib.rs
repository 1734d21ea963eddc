//! File formats, configuration and command workflows for `switchstrat`.
//!
//! The statistics live in `switchstrat-core`; this crate reads trial CSVs and
//! TOML run configurations, runs chains and posterior predictive replicates
//! on a thread pool, and writes every artifact of a run.

pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use config::RunConfig;
pub use error::{AppError, DataError};

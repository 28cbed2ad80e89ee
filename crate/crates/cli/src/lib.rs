//! Batch driver for chance-constrained yield-aware optimization runs.

pub mod config;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{compare, read_results, Results, Run};

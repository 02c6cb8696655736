//! Command implementations behind the `xflow` binary, exposed as a library
//! so integration tests can drive them in-process.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 configuration failure.

pub mod config;
pub mod importance;
pub mod report;
pub mod run;
pub mod synth_cmd;

use thiserror::Error;

pub use config::{ConfigError, RunConfig};
pub use importance::cmd_importance;
pub use report::RunReport;
pub use run::{cmd_run, RunOverrides};
pub use synth_cmd::cmd_synth;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    /// Synth manifest problems are configuration failures too.
    #[error("{0}")]
    Synth(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Synth(_) => 2,
            CliError::Pipeline(_) => 1,
        }
    }
}

/// Worker-count cap honoured by the pipeline's parallel sections.
pub const THREADS_ENV: &str = "XFLOW_THREADS";

/// Builds the global thread pool from `XFLOW_THREADS` when set. Call once,
/// before any parallel work.
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

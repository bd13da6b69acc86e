//! Experiment commands behind the `attnpipe` binary: simulation, offline
//! evaluation, band-power analysis, threshold tables and stream replay.

pub mod app;
pub mod config;
pub mod evaluate;
pub mod psd;
pub mod rundir;
pub mod source;
pub mod stream_cmd;
pub mod thresholds;

use std::fmt;
use std::path::Path;

use serde::Serialize;

pub use config::{Resolved, RunConfig, StreamConfig};
pub use rundir::RunDir;
pub use source::Source;

/// Error record printed on stderr when a command fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: "ConfigInvalid".into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            kind: "IoFailure".into(),
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn is_config(&self) -> bool {
        self.kind == "ConfigInvalid"
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

impl From<attnpipe_core::Error> for Failure {
    fn from(e: attnpipe_core::Error) -> Self {
        if let attnpipe_core::Error::InvalidConfig(m) = &e {
            return Failure::config(m.clone());
        }
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Runs `f` on a pool of `jobs` threads.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure {
            kind: "ThreadPool".into(),
            message: e.to_string(),
        })?;
    Ok(pool.install(f))
}

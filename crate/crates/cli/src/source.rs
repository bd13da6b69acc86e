//! Where sessions come from: a recorded dataset directory or the simulator.

use std::fs;
use std::path::{Path, PathBuf};

use attnpipe_core::data_model::{load_session, Session};
use attnpipe_core::simulate::{simulate_session, SimConfig};

use crate::{CliResult, Failure};

#[derive(Debug, Clone)]
pub enum Source {
    Simulated(SimConfig),
    Recorded(Vec<PathBuf>),
}

impl Source {
    /// Every session subdirectory of `dir` (one holding a manifest), in
    /// name order.
    pub fn recorded(dir: &Path) -> CliResult<Self> {
        let mut dirs = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Failure::io(dir, e))? {
            let p = entry.map_err(|e| Failure::io(dir, e))?.path();
            if p.join("manifest.json").is_file() {
                dirs.push(p);
            }
        }
        if dirs.is_empty() {
            return Err(Failure::config(format!("data_dir: no sessions under {}", dir.display())));
        }
        dirs.sort();
        Ok(Source::Recorded(dirs))
    }

    pub fn len(&self) -> usize {
        match self {
            Source::Simulated(c) => c.n_participants,
            Source::Recorded(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(&self, index: usize) -> CliResult<Session> {
        match self {
            Source::Simulated(c) => Ok(simulate_session(c, index)?),
            Source::Recorded(d) => Ok(load_session(&d[index])?),
        }
    }
}

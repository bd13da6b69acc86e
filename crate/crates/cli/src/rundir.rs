//! Timestamped output directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliResult, Failure};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// `<out_dir>/<command>-<YYYYmmdd-HHMMSS>`, with a numeric suffix when
    /// that name is taken. `exact` skips the naming and uses the path as is.
    pub fn create(out_dir: &Path, command: &str, exact: Option<&Path>) -> CliResult<Self> {
        let path = match exact {
            Some(p) => p.to_path_buf(),
            None => {
                let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
                let base = out_dir.join(format!("{command}-{stamp}"));
                let mut path = base.clone();
                let mut k = 2;
                while path.exists() {
                    path = PathBuf::from(format!("{}-{k}", base.display()));
                    k += 1;
                }
                path
            }
        };
        fs::create_dir_all(&path).map_err(|e| Failure::io(&path, e))?;
        Ok(Self { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let p = self.file(name);
        fs::write(&p, text).map_err(|e| Failure::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure {
            kind: "Json".into(),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Stores the fully resolved config, so the directory can be rerun.
    pub fn write_config(&self, cfg: &RunConfig) -> CliResult<PathBuf> {
        self.write_text(CONFIG_FILE, &cfg.to_json())
    }
}

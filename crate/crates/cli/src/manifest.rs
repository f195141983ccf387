use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::exit::CmdResult;

/// Record of one invocation, enough to replay it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_path: Option<PathBuf>,
    /// Copy of the config file, byte for byte.
    pub config_snapshot: Option<PathBuf>,
    pub git_describe: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
    pub outputs: Vec<PathBuf>,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

impl RunManifest {
    pub fn begin(seed: u64) -> Self {
        Self {
            command: std::env::args().collect(),
            config_path: None,
            config_snapshot: None,
            git_describe: git_describe(),
            seed,
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            outputs: Vec::new(),
        }
    }

    /// Copies the raw config bytes next to the manifest.
    pub fn snapshot(&mut self, out: &Path, config_path: &Path, raw: &[u8]) -> CmdResult {
        let name = match config_path.extension().and_then(|e| e.to_str()) {
            Some(ext) => format!("config.snapshot.{ext}"),
            None => "config.snapshot".into(),
        };
        let dest = out.join(name);
        std::fs::write(&dest, raw)?;
        self.config_path = Some(config_path.to_path_buf());
        self.config_snapshot = Some(dest);
        Ok(())
    }

    pub fn write(&self, out: &Path) -> CmdResult {
        std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn finish(&mut self, out: &Path, status: &str) -> CmdResult {
        self.finished_unix = Some(now());
        self.status = status.into();
        self.write(out)
    }
}

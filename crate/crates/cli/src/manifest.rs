use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

/// Written next to every output so a run can be reproduced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            artifacts: Vec::new(),
            started_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_seconds: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn artifacts<P: AsRef<Path>>(mut self, paths: impl IntoIterator<Item = P>) -> Self {
        self.artifacts.extend(paths.into_iter().map(|p| p.as_ref().display().to_string()));
        self
    }

    pub fn finish(mut self, started: Instant) -> Self {
        let elapsed = started.elapsed().as_secs_f64();
        self.wall_clock_seconds = elapsed;
        self.started_unix_seconds = self.started_unix_seconds.saturating_sub(elapsed as u64);
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        hjbnav::io::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }
}

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::io::write_json;

/// Record of one CLI run. Only `started_unix` and `wall_time` vary between
/// otherwise identical invocations.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub started_unix: u64,
    pub wall_time: f64,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub extra: Value,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub lcqp: &'static str,
    pub format: u32,
}

pub struct ManifestBuilder {
    command: String,
    config: Value,
    seed: Option<u64>,
    started: Instant,
    started_unix: u64,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: Value, seed: Option<u64>) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self { command: command.to_string(), config, seed, started: Instant::now(), started_unix }
    }

    pub fn finish(self, outputs: Vec<PathBuf>, extra: Value) -> RunManifest {
        RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            versions: Versions { lcqp: env!("CARGO_PKG_VERSION"), format: 1 },
            started_unix: self.started_unix,
            wall_time: self.started.elapsed().as_secs_f64(),
            outputs,
            extra,
        }
    }
}

/// Writes to `path` if given, otherwise to stderr.
pub fn emit(manifest: &RunManifest, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_json(p, manifest),
        None => {
            eprintln!("{}", serde_json::to_string_pretty(manifest)?);
            Ok(())
        }
    }
}

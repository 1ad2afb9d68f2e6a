use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Serialize, Serializer};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Written next to every artifact as `<artifact>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    pub format_version: u32,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Tracks one run; `finish` writes the manifest for the primary output.
pub struct Run {
    command: &'static str,
    flags: serde_json::Value,
    seed: Option<u64>,
    started: u128,
    inputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, flags: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            command,
            flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
            seed,
            started: now_ms(),
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn finish(self, outputs: &[&Path]) -> anyhow::Result<()> {
        let Some(primary) = outputs.first() else {
            return Ok(());
        };
        let manifest = RunManifest {
            command: self.command.to_string(),
            flags: self.flags,
            seed: self.seed,
            format_version: MANIFEST_FORMAT_VERSION,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
        };
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn display<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

pub fn display_all<T: Display, S: Serializer>(values: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(values.iter().map(|v| v.to_string()))
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance of one command run. Output paths are relative to the output
/// directory, input paths are absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, Vec<u64>>,
    pub jobs: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_ms: u64,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> CliResult<FileDigest> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_bytes(&bytes),
    })
}

/// What `--config` pointed at.
#[derive(Debug)]
pub enum ConfigSource {
    Plain(Box<RunConfig>),
    Replay(Box<RunManifest>),
}

pub fn load_config(path: &Path) -> CliResult<ConfigSource> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {} is not JSON: {e}", path.display())))?;
    let is_manifest = value
        .as_object()
        .is_some_and(|o| o.contains_key("tool_version") && o.contains_key("outputs"));
    let bad = |e: serde_json::Error| CliError::usage(format!("config {}: {e}", path.display()));
    if is_manifest {
        Ok(ConfigSource::Replay(Box::new(serde_json::from_value(value).map_err(bad)?)))
    } else {
        Ok(ConfigSource::Plain(Box::new(serde_json::from_value(value).map_err(bad)?)))
    }
}

/// Check recorded input digests before a replay.
pub fn check_inputs(recorded: &[FileDigest]) -> CliResult<()> {
    let mut changed = Vec::new();
    for d in recorded {
        match digest_file(&d.path) {
            Ok(now) if now.sha256 == d.sha256 => {}
            Ok(_) => changed.push(format!("{} (content changed)", d.path.display())),
            Err(_) => changed.push(format!("{} (unreadable)", d.path.display())),
        }
    }
    if changed.is_empty() {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "manifest inputs differ: {}",
            changed.join(", ")
        )))
    }
}

/// Compare replay outputs against the recorded ones.
pub fn check_outputs(recorded: &[FileDigest], produced: &[FileDigest]) -> CliResult<()> {
    let want: BTreeMap<&Path, &str> = recorded.iter().map(|d| (d.path.as_path(), d.sha256.as_str())).collect();
    let got: BTreeMap<&Path, &str> = produced.iter().map(|d| (d.path.as_path(), d.sha256.as_str())).collect();
    let mut diffs = Vec::new();
    for (p, h) in &want {
        match got.get(p) {
            Some(g) if g == h => {}
            Some(_) => diffs.push(format!("{} differs", p.display())),
            None => diffs.push(format!("{} not produced", p.display())),
        }
    }
    for p in got.keys().filter(|p| !want.contains_key(*p)) {
        diffs.push(format!("{} not in manifest", p.display()));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(CliError::data(format!("replay mismatch: {}", diffs.join(", "))))
    }
}

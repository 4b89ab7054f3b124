//! Command-line pipeline for cross-source annotation audits.
//!
//! Every command writes its outputs into `--out-dir` together with a
//! `<command>.manifest.json` recording the effective config, seeds, and
//! digests of inputs and outputs. Passing a manifest back as `--config`
//! replays the run and fails with exit code 2 if any output differs.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod server;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use crate::cli::Cli;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_USAGE};
use crate::manifest::{ConfigSource, FileDigest, RunManifest, TOOL_VERSION};

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("labelaudit: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        // The global pool can only be set once per process; later calls keep the first.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    commands::execute(cli)
}

pub(crate) fn absolute(path: &Path) -> CliResult<PathBuf> {
    if path.is_absolute() {
        return Ok(path.to_path_buf());
    }
    let cwd = std::env::current_dir()
        .map_err(|e| CliError::usage(format!("cannot resolve the working directory: {e}")))?;
    Ok(cwd.join(path))
}

/// State of one command run: effective config, recorded inputs and outputs.
pub struct Run {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub config: RunConfig,
    pub jobs: Option<usize>,
    replay: Option<RunManifest>,
    seeds: BTreeMap<String, Vec<u64>>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    started: Instant,
}

impl Run {
    pub fn start(
        command: &'static str,
        config_path: Option<&Path>,
        out_dir: Option<&Path>,
        jobs: Option<usize>,
    ) -> CliResult<Self> {
        let out_dir = absolute(out_dir.unwrap_or(Path::new(".")))?;
        fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out_dir.display())))?;
        let (mut config, replay) = match config_path {
            None => (RunConfig::default(), None),
            Some(p) => match manifest::load_config(p)? {
                ConfigSource::Plain(c) => (*c, None),
                ConfigSource::Replay(m) => {
                    if m.command != command {
                        return Err(CliError::usage(format!(
                            "manifest was written by {:?}, not {command:?}",
                            m.command
                        )));
                    }
                    manifest::check_inputs(&m.inputs)?;
                    (m.config.clone(), Some(*m))
                }
            },
        };
        config.resolve_paths(&out_dir);
        Ok(Run {
            command,
            out_dir,
            config,
            jobs,
            replay,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn record_input(&mut self, path: &Path) -> CliResult<()> {
        let d = manifest::digest_file(path)?;
        if !self.inputs.iter().any(|i| i.path == d.path) {
            self.inputs.push(d);
        }
        Ok(())
    }

    pub fn record_seeds(&mut self, key: &str, seeds: Vec<u64>) {
        self.seeds.insert(key.to_string(), seeds);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.out_path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.retain(|o| o.path != Path::new(name));
        self.outputs.push(FileDigest {
            path: name.into(),
            sha256: manifest::sha256_bytes(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Write the manifest and, on replay, compare outputs with the recorded ones.
    pub fn finish(self) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config: self.config,
            seeds: self.seeds,
            jobs: self.jobs,
            inputs: self.inputs,
            outputs: self.outputs,
            duration_ms: self.started.elapsed().as_millis() as u64,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.out_dir.join(RunManifest::file_name(self.command));
        fs::write(&path, text)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        if let Some(recorded) = &self.replay {
            manifest::check_outputs(&recorded.outputs, &manifest.outputs)?;
        }
        Ok(manifest)
    }
}

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_labelaudit"));
    c.env_remove("LABELAUDIT_JOBS").env_remove("LABELAUDIT_PORT");
    c
}

pub fn labelaudit(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small, fast configuration: five sources of 120 instances with cue-driven
/// flips in S01.
pub fn small_config() -> Value {
    json!({
        "corpus": "corpus.jsonl",
        "variable": "family",
        "target_source": "S01",
        "encoder": { "hash_dim": 4096 },
        "train": { "epochs": 6, "learning_rate": 0.02 },
        "inconsistency": { "m": 2, "seeds": [0, 1] },
        "discovery": { "k": 3, "repetitions": 2, "threshold": 2, "seeds": [0, 1] },
        "verification": { "seeds": [0, 1] },
        "incremental": { "step_size": 40, "epochs_per_step": 2 },
        "synth": {
            "sources": 5,
            "instances_per_source": 120,
            "signal_strength": 0.2,
            "cue_strength": 0.15,
            "noise_plan": {
                "S01": {
                    "flip_rate": 0.2,
                    "direction": "symmetric",
                    "selection": { "kind": "cue", "to_positive": 1, "to_negative": 0 }
                }
            }
        }
    })
}

pub fn write_config(dir: &Path, config: &Value) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

pub fn run_ok(args: &[&str]) {
    let o = labelaudit(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
}

/// Synthesize the small corpus into `out`; returns the config path.
pub fn synth_run(out: &Path) -> PathBuf {
    let cfg = write_config(out, &small_config());
    run_ok(&["synth", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    cfg
}

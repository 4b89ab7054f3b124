mod common;

use std::fs;
use std::path::Path;

use common::*;
use labelaudit_cli::manifest::{sha256_bytes, RunManifest};
use labelaudit_core::discovery::ErrorCountLedger;
use labelaudit_core::verification::{Correction, CorrectionVerdict};

fn manifest(dir: &Path, command: &str) -> RunManifest {
    let text = fs::read_to_string(dir.join(RunManifest::file_name(command))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn assert_manifest_covers_outputs(dir: &Path, command: &str, expected: &[&str]) {
    let m = manifest(dir, command);
    assert_eq!(m.command, command);
    let names: Vec<String> = m.outputs.iter().map(|o| o.path.display().to_string()).collect();
    for e in expected {
        assert!(names.iter().any(|n| n == e), "{e} missing from {names:?}");
    }
    for o in &m.outputs {
        let bytes = fs::read(dir.join(&o.path)).unwrap();
        assert_eq!(sha256_bytes(&bytes), o.sha256, "{}", o.path.display());
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = labelaudit(&["discover"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = labelaudit(&["synth", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_exits_cleanly() {
    let o = labelaudit(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verify-incremental"));
}

#[test]
fn invalid_config_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    synth_run(dir.path());
    let mut cfg = small_config();
    cfg["discovery"]["threshold"] = 9.into();
    let path = write_config(dir.path(), &cfg);
    let o = labelaudit(&["discover", "--config", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("threshold"));
}

#[test]
fn duplicate_ids_are_a_data_error_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("dup.jsonl");
    let rec = |id: &str| {
        format!(r#"{{"incident_id":"{id}","source":"S01","note_a":"a","note_b":"b","labels":{{"family":1}}}}"#)
    };
    fs::write(&corpus, format!("{}\n{}\n{}\n", rec("x1"), rec("x2"), rec("x1"))).unwrap();
    let o = labelaudit(&["ingest", "--corpus", corpus.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("line 1"), "{err}");
}

#[test]
fn ingest_normalizes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("in.csv");
    fs::write(
        &corpus,
        "incident_id,source,note_a,note_b,age,sex,race,family\n\
         a,S01,hello,there,30,female,white,1\n\
         b,S01,bye,now,,male,black,maybe\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(&["ingest", "--corpus", corpus.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ingest_report.json")).unwrap()).unwrap();
    assert_eq!(report["records"], 1);
    assert_eq!(report["rejected"][0]["line"], 3);
    assert_eq!(report["sources"]["S01"], 1);
    assert_manifest_covers_outputs(&out, "ingest", &["corpus.jsonl", "ingest_report.json"]);
}

#[test]
fn report_on_an_empty_directory_fails_listing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = labelaudit(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("ledger.json") && err.contains("removal.json"), "{err}");
}

#[test]
fn full_pipeline_writes_outputs_with_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = synth_run(out);
    let c = cfg.to_str().unwrap();
    let o = out.to_str().unwrap();
    assert_manifest_covers_outputs(out, "synth", &["corpus.jsonl", "noise_ledger.json"]);

    run_ok(&["discover", "--config", c, "--out-dir", o]);
    assert_manifest_covers_outputs(out, "discover", &["ledger.json", "error_histogram.csv", "flag_summary.json"]);
    let ledger: ErrorCountLedger = serde_json::from_str(&fs::read_to_string(out.join("ledger.json")).unwrap()).unwrap();
    assert!(!ledger.flags.is_empty());

    run_ok(&["verify-removal", "--config", c, "--out-dir", o]);
    assert_manifest_covers_outputs(out, "verify-removal", &["removal.json", "removal_table.csv"]);
    let table = fs::read_to_string(out.join("removal_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "seed,original,flags_removed,random_dropped");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));

    let corrections: Vec<Correction> = ledger
        .flags
        .iter()
        .map(|id| Correction {
            adjudication_id: format!("test/{id}"),
            incident_id: id.clone(),
            verdict: CorrectionVerdict::Flip,
        })
        .collect();
    let cpath = out.join("corrections.json");
    fs::write(&cpath, serde_json::to_string(&corrections).unwrap()).unwrap();
    run_ok(&["verify-incremental", "--config", c, "--out-dir", o, "--corrections", cpath.to_str().unwrap()]);
    assert_manifest_covers_outputs(out, "verify-incremental", &["incremental.json", "incremental_curves.csv"]);

    run_ok(&["bias", "--config", c, "--out-dir", o, "--additive-ci"]);
    assert_manifest_covers_outputs(out, "bias", &["bias.json", "bias_table.csv"]);
    let bias: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bias.json")).unwrap()).unwrap();
    assert_eq!(bias["ci_form"], "additive");

    run_ok(&["inconsistency", "--config", c, "--out-dir", o, "--target", "S02"]);
    assert_manifest_covers_outputs(out, "inconsistency", &["delta_f1.json", "delta_f1.csv"]);

    run_ok(&["report", o]);
    assert_manifest_covers_outputs(
        out,
        "report",
        &[
            "report/summary.md",
            "report/delta_f1.csv",
            "report/error_histogram.csv",
            "report/removal_table.csv",
            "report/incremental_curves.csv",
            "report/bias_table.csv",
        ],
    );
    let hist = fs::read_to_string(out.join("report/error_histogram.csv")).unwrap();
    let mut expected = String::from("error_count,frequency\n");
    for n in 0..=ledger.config.repetitions as u32 {
        let freq = ledger.counts.values().filter(|&&c| c == n).count();
        expected.push_str(&format!("{n},{freq}\n"));
    }
    assert_eq!(hist, expected);
    let summary = fs::read_to_string(out.join("report/summary.md")).unwrap();
    assert!(!summary.contains("Missing inputs"), "{summary}");
}

#[test]
fn replaying_a_manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let cfg = synth_run(&first);
    run_ok(&["discover", "--config", cfg.to_str().unwrap(), "--out-dir", first.to_str().unwrap()]);
    let m = first.join("discover.manifest.json");

    let second = dir.path().join("second");
    run_ok(&["discover", "--config", m.to_str().unwrap(), "--out-dir", second.to_str().unwrap()]);
    for name in ["ledger.json", "error_histogram.csv", "flag_summary.json"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }

    let mut tampered = manifest(&first, "discover");
    tampered.outputs[0].sha256 = "0".repeat(64);
    let tpath = dir.path().join("tampered.json");
    fs::write(&tpath, serde_json::to_string(&tampered).unwrap()).unwrap();
    let o = labelaudit(&["discover", "--config", tpath.to_str().unwrap(), "--out-dir", dir.path().join("third").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replay mismatch"));

    let o = labelaudit(&["bias", "--config", m.to_str().unwrap(), "--out-dir", dir.path().join("fourth").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = synth_run(out);
    run_ok(&["discover", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    let corpus = out.join("corpus.jsonl");
    let mut text = fs::read_to_string(&corpus).unwrap();
    text.push('\n');
    fs::write(&corpus, text).unwrap();
    let m = out.join("discover.manifest.json");
    let o = labelaudit(&["discover", "--config", m.to_str().unwrap(), "--out-dir", out.join("again").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corpus.jsonl"));
}

#[test]
fn ledger_does_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let cfg = synth_run(base);
    let corpus = base.join("corpus.jsonl");
    let corpus = corpus.to_str().unwrap();
    let mut ledgers = Vec::new();
    for jobs in ["1", "3"] {
        let out = base.join(format!("jobs{jobs}"));
        run_ok(&[
            "discover", "--config", cfg.to_str().unwrap(), "--corpus", corpus, "--out-dir", out.to_str().unwrap(),
            "--jobs", jobs,
        ]);
        ledgers.push(fs::read(out.join("ledger.json")).unwrap());
    }
    assert_eq!(ledgers[0], ledgers[1]);
    let out = base.join("env");
    let o = bin()
        .args(["discover", "--config", cfg.to_str().unwrap(), "--corpus", corpus, "--out-dir", out.to_str().unwrap()])
        .env("LABELAUDIT_JOBS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("ledger.json")).unwrap(), ledgers[0]);
    assert_eq!(manifest(&out, "discover").jobs, Some(2));
}

#[test]
fn zero_jobs_is_a_usage_error() {
    let o = labelaudit(&["synth", "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

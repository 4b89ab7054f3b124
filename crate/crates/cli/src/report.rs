use std::fmt::Write as _;
use std::path::Path;

use labelaudit_core::bias::BiasReport;
use labelaudit_core::discovery::{self, ErrorCountLedger};
use labelaudit_core::inconsistency::CompositionKind;
use labelaudit_core::verification::{Arm, IncrementalReport, RemovalExperiment};
use serde::Deserialize;

use crate::commands::{
    InconsistencyOutput, BIAS_CSV, BIAS_FILE, DELTA_F1_CSV, DELTA_F1_FILE, HISTOGRAM_CSV, INCREMENTAL_CSV,
    INCREMENTAL_FILE, LEDGER_FILE, REMOVAL_CSV, REMOVAL_FILE,
};
use crate::error::{CliError, CliResult};
use crate::Run;

pub const REPORT_DIR: &str = "report";
pub const INPUTS: [&str; 5] = [DELTA_F1_FILE, LEDGER_FILE, REMOVAL_FILE, INCREMENTAL_FILE, BIAS_FILE];

fn load<T: for<'de> Deserialize<'de>>(run: &mut Run, dir: &Path, name: &str) -> CliResult<Option<T>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Ok(None);
    }
    run.record_input(&path)?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn out(name: &str) -> String {
    format!("{REPORT_DIR}/{name}")
}

/// Render plot data and a Markdown summary for whatever module outputs
/// `run_dir` holds. Fails if it holds none.
pub fn render(mut run: Run, run_dir: &Path) -> CliResult<()> {
    let delta: Option<InconsistencyOutput> = load(&mut run, run_dir, DELTA_F1_FILE)?;
    let ledger: Option<ErrorCountLedger> = load(&mut run, run_dir, LEDGER_FILE)?;
    let removal: Option<RemovalExperiment> = load(&mut run, run_dir, REMOVAL_FILE)?;
    let incremental: Option<IncrementalReport> = load(&mut run, run_dir, INCREMENTAL_FILE)?;
    let bias: Option<BiasReport> = load(&mut run, run_dir, BIAS_FILE)?;
    let present = [
        delta.is_some(),
        ledger.is_some(),
        removal.is_some(),
        incremental.is_some(),
        bias.is_some(),
    ];
    let missing: Vec<&str> = INPUTS
        .iter()
        .zip(present)
        .filter(|(_, p)| !p)
        .map(|(n, _)| *n)
        .collect();
    if missing.len() == INPUTS.len() {
        return Err(CliError::data(format!(
            "{} holds no module outputs; expected any of: {}",
            run_dir.display(),
            missing.join(", ")
        )));
    }

    let mut md = String::from("# Annotation audit report\n");
    if let Some(d) = &delta {
        run.write(&out(DELTA_F1_CSV), d.csv().as_bytes())?;
        delta_section(&mut md, d);
    }
    if let Some(l) = &ledger {
        run.write(&out(HISTOGRAM_CSV), l.histogram_csv().as_bytes())?;
        discovery_section(&mut md, l);
    }
    if let Some(r) = &removal {
        run.write(&out(REMOVAL_CSV), r.table_csv().as_bytes())?;
        removal_section(&mut md, r);
    }
    if let Some(i) = &incremental {
        run.write(&out(INCREMENTAL_CSV), i.curve_csv().as_bytes())?;
        incremental_section(&mut md, i);
    }
    if let Some(b) = &bias {
        run.write(&out(BIAS_CSV), b.table_csv().as_bytes())?;
        bias_section(&mut md, b);
    }
    if !missing.is_empty() {
        md.push_str("\n## Missing inputs\n\n");
        for m in &missing {
            let _ = writeln!(md, "- {m}");
        }
    }
    run.write(&out("summary.md"), md.as_bytes())?;
    run.finish()?;
    Ok(())
}

fn delta_section(md: &mut String, d: &InconsistencyOutput) {
    let _ = writeln!(md, "\n## Cross-source consistency ({})\n", d.variable);
    md.push_str("| source | ΔF1 target | ΔF1 others | F1 pure others (target/others) |\n|---|---|---|---|\n");
    for r in &d.reports {
        let pure = r.mean(CompositionKind::PureOthers);
        let _ = writeln!(
            md,
            "| {} | {:+.4} | {:+.4} | {:.4} / {:.4} |",
            r.target_source, r.delta_f1_target, r.delta_f1_others, pure.f1_target, pure.f1_others
        );
    }
    let _ = writeln!(md, "\n{}", d.summary_text);
    for s in &d.skipped {
        let _ = writeln!(md, "\nSkipped {}: {}", s.source, s.reason);
    }
}

fn discovery_section(md: &mut String, l: &ErrorCountLedger) {
    let s = discovery::summarize_flags(l, l.counts.len());
    let _ = writeln!(md, "\n## Flagged instances ({} in {})\n", l.variable, l.target_source);
    let _ = writeln!(
        md,
        "{} of {} instances ({:.1}%) misclassified in at least {} of {} repetitions ({}-fold).",
        s.flagged, s.total, s.percent, l.config.threshold, l.config.repetitions, l.config.k
    );
}

fn removal_section(md: &mut String, r: &RemovalExperiment) {
    let _ = writeln!(md, "\n## Removal experiment ({} in {})\n", r.variable, r.target_source);
    md.push_str("| arm | removed per seed | mean F1 (others test) |\n|---|---|---|\n");
    for arm in [Arm::Original, Arm::FlagsRemoved, Arm::RandomDropped] {
        let a = r.arm(arm);
        let removed: Vec<String> = a.removed.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(md, "| {arm:?} | {} | {:.4} |", removed.join("/"), a.mean);
    }
    for (label, t) in [
        ("flags removed vs original", &r.t_test_flags_vs_original),
        ("flags removed vs random drop", &r.t_test_flags_vs_random),
    ] {
        match t {
            Some(t) => {
                let _ = writeln!(
                    md,
                    "\nWelch t-test, {label}: t = {:.3}, df = {:.2}, p = {:.4}",
                    t.t_statistic, t.degrees_of_freedom, t.p_value
                );
            }
            None => {
                let _ = writeln!(md, "\nWelch t-test, {label}: undefined (zero variance)");
            }
        }
    }
}

fn incremental_section(md: &mut String, i: &IncrementalReport) {
    let _ = writeln!(md, "\n## Incremental training ({} in {})\n", i.variable, i.target_source);
    md.push_str("| composition | instances fed | final F1 target | final F1 others |\n|---|---|---|---|\n");
    for p in &i.plans {
        if let Some(last) = p.curve.last() {
            let _ = writeln!(
                md,
                "| {:?} | {} | {:.4} | {:.4} |",
                p.composition, last.instances_fed, last.f1_target, last.f1_others
            );
        }
    }
    for w in &i.warnings {
        let _ = writeln!(md, "\nWarning: {w}");
    }
}

fn bias_section(md: &mut String, b: &BiasReport) {
    let _ = writeln!(md, "\n## Odds ratios ({}, z = {})\n", b.variable, b.z);
    md.push_str("| variant | axis | OR | CI | positives (comparison/reference) |\n|---|---|---|---|---|\n");
    for r in &b.records {
        let _ = writeln!(
            md,
            "| {:?} | {:?} | {:.2} | [{:.2}; {:.2}] | {}/{} |",
            r.annotation_variant, r.axis, r.or_value, r.ci_low, r.ci_high, r.comparison_count, r.reference_count
        );
    }
    for w in &b.warnings {
        let _ = writeln!(md, "\nWarning: {w}");
    }
}

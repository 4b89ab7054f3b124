use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use labelaudit_core::bias::{self, BiasReport, CiForm, GroupSpec};
use labelaudit_core::corpus::{self, Corpus, ExclusionEntry, Label, RecordError};
use labelaudit_core::discovery::{self, ErrorCountLedger};
use labelaudit_core::inconsistency::{self, DeltaF1Report, SourceSummary};
use labelaudit_core::review::{ExportBundle, ReviewStore};
use labelaudit_core::synth;
use labelaudit_core::verification::{self, Correction};
use labelaudit_core::Error;
use serde::{Deserialize, Serialize};

use crate::cli::{Cli, Command, DataArgs};
use crate::error::{CliError, CliResult};
use crate::{absolute, report, server, Run};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const NOISE_LEDGER_FILE: &str = "noise_ledger.json";
pub const DELTA_F1_FILE: &str = "delta_f1.json";
pub const DELTA_F1_CSV: &str = "delta_f1.csv";
pub const LEDGER_FILE: &str = "ledger.json";
pub const HISTOGRAM_CSV: &str = "error_histogram.csv";
pub const FLAG_SUMMARY_FILE: &str = "flag_summary.json";
pub const REMOVAL_FILE: &str = "removal.json";
pub const REMOVAL_CSV: &str = "removal_table.csv";
pub const INCREMENTAL_FILE: &str = "incremental.json";
pub const INCREMENTAL_CSV: &str = "incremental_curves.csv";
pub const CORRECTED_VIEW_FILE: &str = "corrected_view.json";
pub const BIAS_FILE: &str = "bias.json";
pub const BIAS_CSV: &str = "bias_table.csv";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub present: usize,
    pub absent: usize,
    pub unknown: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub rejected: Vec<RecordError>,
    pub sources: BTreeMap<String, usize>,
    pub variables: BTreeMap<String, LabelCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<Vec<ExclusionEntry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSource {
    pub source: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyOutput {
    pub variable: String,
    pub reports: Vec<DeltaF1Report>,
    pub skipped: Vec<SkippedSource>,
    pub summary: SourceSummary,
    pub summary_text: String,
}

impl InconsistencyOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from("target_source,delta_f1_target,delta_f1_others\n");
        for r in &self.reports {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                r.target_source, r.delta_f1_target, r.delta_f1_others
            ));
        }
        out
    }
}

/// A corrections file: a review export bundle or a bare list.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CorrectionsFile {
    Bundle(Box<ExportBundle>),
    List(Vec<Correction>),
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let out_dir = cli.out_dir.as_deref();
    let jobs = cli.jobs;
    match cli.command {
        Command::Ingest {
            config,
            data,
            format,
        } => {
            let mut run = Run::start(name, config.as_deref(), out_dir, jobs)?;
            apply_data_args(&mut run, data)?;
            if format.is_some() {
                run.config.format = format;
            }
            ingest(run)
        }
        Command::Synth { config, seed } => {
            let mut run = Run::start(name, config.as_deref(), out_dir, jobs)?;
            if let Some(s) = seed {
                run.config.synth.seed = s;
            }
            synthesize(run)
        }
        Command::Inconsistency { config, data } => {
            let mut run = Run::start(name, Some(&config), out_dir, jobs)?;
            apply_data_args(&mut run, data)?;
            state_inconsistency(run)
        }
        Command::Discover {
            config,
            data,
            threshold,
        } => {
            let mut run = Run::start(name, Some(&config), out_dir, jobs)?;
            apply_data_args(&mut run, data)?;
            if let Some(t) = threshold {
                run.config.discovery.threshold = t;
            }
            discover(run)
        }
        Command::VerifyRemoval {
            config,
            data,
            ledger,
        } => {
            let mut run = Run::start(name, Some(&config), out_dir, jobs)?;
            apply_data_args(&mut run, data)?;
            set_path(&mut run.config.ledger, ledger)?;
            verify_removal(run)
        }
        Command::VerifyIncremental {
            config,
            data,
            ledger,
            corrections,
            cold_start,
        } => {
            let mut run = Run::start(name, Some(&config), out_dir, jobs)?;
            apply_data_args(&mut run, data)?;
            set_path(&mut run.config.ledger, ledger)?;
            set_path(&mut run.config.corrections, corrections)?;
            if cold_start {
                run.config.incremental.cold_start = true;
            }
            verify_incremental(run)
        }
        Command::Bias {
            config,
            data,
            ledger,
            additive_ci,
            z,
        } => {
            let mut run = Run::start(name, Some(&config), out_dir, jobs)?;
            apply_data_args(&mut run, data)?;
            set_path(&mut run.config.ledger, ledger)?;
            if additive_ci {
                run.config.bias.ci_form = CiForm::Additive;
            }
            if let Some(z) = z {
                run.config.bias.z = z;
            }
            bias_analysis(run)
        }
        Command::ReviewServe {
            config,
            corpus,
            store,
            port,
            static_dir,
        } => {
            let mut run = Run::start(name, config.as_deref(), out_dir, jobs)?;
            set_path(&mut run.config.corpus, corpus)?;
            set_path(&mut run.config.review.store, store)?;
            set_path(&mut run.config.review.static_dir, static_dir)?;
            if let Some(p) = port {
                run.config.review.port = p;
            }
            review_serve(run)
        }
        Command::Report { run_dir } => {
            let run_dir = absolute(&run_dir)?;
            let run = Run::start(name, None, Some(out_dir.unwrap_or(&run_dir)), jobs)?;
            report::render(run, &run_dir)
        }
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) -> CliResult<()> {
    if let Some(p) = flag {
        *slot = Some(absolute(&p)?);
    }
    Ok(())
}

fn apply_data_args(run: &mut Run, data: DataArgs) -> CliResult<()> {
    set_path(&mut run.config.corpus, data.corpus)?;
    if data.variable.is_some() {
        run.config.variable = data.variable;
    }
    if data.target.is_some() {
        run.config.target_source = data.target;
    }
    Ok(())
}

fn required<'a>(value: &'a Option<String>, what: &str, key: &str) -> CliResult<&'a str> {
    value
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("no {what}: set `{key}` in the config or pass --{what}")))
}

fn load_corpus(run: &mut Run) -> CliResult<Corpus> {
    let path = run
        .config
        .corpus
        .clone()
        .ok_or_else(|| CliError::usage("no corpus: set `corpus` in the config or pass --corpus"))?;
    run.record_input(&path)?;
    let format = run.config.corpus_format(&path);
    let ingested = corpus::ingest(&path, format)?;
    if !ingested.rejected.is_empty() {
        eprintln!(
            "labelaudit: {} record(s) rejected while reading {}",
            ingested.rejected.len(),
            path.display()
        );
    }
    Ok(ingested.corpus)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_ledger(run: &mut Run) -> CliResult<ErrorCountLedger> {
    let path = match &run.config.ledger {
        Some(p) => p.clone(),
        None => {
            let p = run.out_path(LEDGER_FILE);
            run.config.ledger = Some(p.clone());
            p
        }
    };
    run.record_input(&path)?;
    let ledger: ErrorCountLedger = read_json(&path)?;
    if let Some(v) = &run.config.variable {
        if *v != ledger.variable {
            return Err(CliError::usage(format!(
                "config variable {v:?} does not match the ledger's {:?}",
                ledger.variable
            )));
        }
    }
    if let Some(t) = &run.config.target_source {
        if *t != ledger.target_source {
            return Err(CliError::usage(format!(
                "config target {t:?} does not match the ledger's {:?}",
                ledger.target_source
            )));
        }
    }
    Ok(ledger)
}

fn ingest(mut run: Run) -> CliResult<()> {
    let path = run
        .config
        .corpus
        .clone()
        .ok_or_else(|| CliError::usage("no corpus: set `corpus` in the config or pass --corpus"))?;
    run.record_input(&path)?;
    let format = run.config.corpus_format(&path);
    let ingested = corpus::ingest(&path, format)?;
    let c = &ingested.corpus;
    let mut sources: BTreeMap<String, usize> = BTreeMap::new();
    let mut variables: BTreeMap<String, LabelCounts> = BTreeMap::new();
    for inc in c.incidents() {
        *sources.entry(inc.source.clone()).or_default() += 1;
        for var in inc.labels.keys() {
            let slot = variables.entry(var.clone()).or_default();
            match inc.label(var) {
                Label::Present => slot.present += 1,
                Label::Absent => slot.absent += 1,
                Label::Unknown => slot.unknown += 1,
            }
        }
    }
    let exclusion = match &run.config.variable {
        Some(v) => Some(corpus::exclude_sparse_sources(c, v, run.config.inconsistency.min_positives)?.1),
        None => None,
    };
    let report = IngestReport {
        records: c.len(),
        rejected: ingested.rejected.clone(),
        sources,
        variables,
        exclusion,
    };
    run.write(CORPUS_FILE, c.to_jsonl_string().as_bytes())?;
    run.write_json(INGEST_REPORT_FILE, &report)?;
    run.finish()?;
    Ok(())
}

fn synthesize(mut run: Run) -> CliResult<()> {
    let out = synth::generate(&run.config.synth)?;
    run.record_seeds("synth", vec![run.config.synth.seed]);
    run.write(CORPUS_FILE, out.corpus.to_jsonl_string().as_bytes())?;
    run.write_json(NOISE_LEDGER_FILE, &out.ledger)?;
    run.finish()?;
    Ok(())
}

fn state_inconsistency(mut run: Run) -> CliResult<()> {
    let corpus = load_corpus(&mut run)?;
    let variable = required(&run.config.variable, "variable", "variable")?.to_string();
    let cfg = &run.config;
    let targets: Vec<String> = match &cfg.target_source {
        Some(t) => vec![t.clone()],
        None => corpus.sources().into_iter().map(String::from).collect(),
    };
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for t in &targets {
        match inconsistency::run_state_inconsistency(
            &corpus,
            &variable,
            t,
            &cfg.inconsistency,
            &cfg.encoder,
            &cfg.train,
        ) {
            Ok(r) => reports.push(r),
            Err(e @ Error::Insufficient(_)) if cfg.target_source.is_none() => {
                eprintln!("labelaudit: skipping {t}: {e}");
                skipped.push(SkippedSource {
                    source: t.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    if reports.is_empty() {
        return Err(CliError::data("no source has enough data for the comparison"));
    }
    let summary = SourceSummary::from_reports(&reports);
    let output = InconsistencyOutput {
        variable,
        summary_text: summary.describe(),
        reports,
        skipped,
        summary,
    };
    run.record_seeds("seeds", run.config.inconsistency.seeds.clone());
    run.record_seeds("partition_seed", vec![run.config.inconsistency.partition_seed]);
    run.write_json(DELTA_F1_FILE, &output)?;
    run.write(DELTA_F1_CSV, output.csv().as_bytes())?;
    run.finish()?;
    Ok(())
}

fn discover(mut run: Run) -> CliResult<()> {
    let corpus = load_corpus(&mut run)?;
    let cfg = &run.config;
    let variable = required(&cfg.variable, "variable", "variable")?;
    let target = required(&cfg.target_source, "target", "target_source")?;
    let ledger = discovery::run_discovery(&corpus, variable, target, &cfg.discovery, &cfg.encoder, &cfg.train)?;
    let summary = discovery::summarize_flags(&ledger, ledger.counts.len());
    run.record_seeds("seeds", run.config.discovery.seeds.clone());
    run.record_seeds("partition_seed", vec![run.config.discovery.partition_seed]);
    run.write_json(LEDGER_FILE, &ledger)?;
    run.write(HISTOGRAM_CSV, ledger.histogram_csv().as_bytes())?;
    run.write_json(FLAG_SUMMARY_FILE, &summary)?;
    run.finish()?;
    Ok(())
}

fn verify_removal(mut run: Run) -> CliResult<()> {
    let corpus = load_corpus(&mut run)?;
    let ledger = load_ledger(&mut run)?;
    let cfg = &run.config;
    let experiment =
        verification::run_removal_experiment(&corpus, &ledger, &cfg.verification, &cfg.encoder, &cfg.train)?;
    run.record_seeds("seeds", run.config.verification.seeds.clone());
    run.record_seeds("partition_seed", vec![run.config.verification.partition_seed]);
    run.write_json(REMOVAL_FILE, &experiment)?;
    run.write(REMOVAL_CSV, experiment.table_csv().as_bytes())?;
    run.finish()?;
    Ok(())
}

fn verify_incremental(mut run: Run) -> CliResult<()> {
    let corpus = load_corpus(&mut run)?;
    let ledger = load_ledger(&mut run)?;
    let path = run.config.corrections.clone().ok_or_else(|| {
        CliError::usage("no corrections: set `corrections` in the config or pass --corrections")
    })?;
    run.record_input(&path)?;
    let corrections = match read_json::<CorrectionsFile>(&path)? {
        CorrectionsFile::Bundle(b) => {
            if b.variable != ledger.variable || b.target_source != ledger.target_source {
                return Err(CliError::data(format!(
                    "corrections are for {}/{}, the ledger for {}/{}",
                    b.target_source, b.variable, ledger.target_source, ledger.variable
                )));
            }
            b.corrections
        }
        CorrectionsFile::List(l) => l,
    };
    let cfg = &run.config;
    let prepared = corpus::prepare_target_view(
        &corpus,
        &ledger.variable,
        &ledger.target_source,
        cfg.verification.partition_seed,
        cfg.verification.min_positives,
        cfg.verification.allow_unbalanced,
    )?;
    let corrected = verification::apply_corrections(&prepared.view, &ledger.flags, &corrections)?;
    let report = verification::run_incremental(
        &corpus,
        &ledger,
        &corrected,
        &cfg.verification,
        &cfg.incremental,
        &cfg.encoder,
        &cfg.train,
    )?;
    for w in &report.warnings {
        eprintln!("labelaudit: {w}");
    }
    run.record_seeds("seeds", run.config.verification.seeds.clone());
    run.record_seeds("partition_seed", vec![run.config.verification.partition_seed]);
    run.write_json(INCREMENTAL_FILE, &report)?;
    run.write(INCREMENTAL_CSV, report.curve_csv().as_bytes())?;
    run.write_json(CORRECTED_VIEW_FILE, &corrected)?;
    run.finish()?;
    Ok(())
}

fn bias_analysis(mut run: Run) -> CliResult<()> {
    let corpus = load_corpus(&mut run)?;
    let ledger = load_ledger(&mut run)?;
    let cfg = &run.config.bias;
    if cfg.axes.is_empty() {
        return Err(CliError::usage("bias.axes is empty"));
    }
    let specs: Vec<GroupSpec> = cfg.axes.iter().map(|&axis| GroupSpec { axis }).collect();
    let variants = bias::build_variants(&corpus, &ledger, cfg.seed)?;
    let report: BiasReport = bias::run_bias_analysis(&variants, &ledger.variable, &specs, cfg.z, cfg.ci_form)?;
    for w in &report.warnings {
        eprintln!("labelaudit: {w}");
    }
    run.record_seeds("bias", vec![run.config.bias.seed]);
    run.write_json(BIAS_FILE, &report)?;
    run.write(BIAS_CSV, report.table_csv().as_bytes())?;
    run.finish()?;
    Ok(())
}

fn review_serve(mut run: Run) -> CliResult<()> {
    let corpus = match run.config.corpus.clone() {
        Some(_) => Some(Arc::new(load_corpus(&mut run)?)),
        None => None,
    };
    let store_dir = run
        .config
        .review
        .store
        .clone()
        .unwrap_or_else(|| run.out_path("review"));
    run.config.review.store = Some(store_dir.clone());
    let store = Arc::new(ReviewStore::open(&store_dir, corpus)?);
    let port = run.config.review.port;
    let static_dir = run.config.review.static_dir.clone();
    run.finish()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::data(format!("cannot start the runtime: {e}")))?;
    runtime.block_on(server::serve(store, static_dir, port))
}

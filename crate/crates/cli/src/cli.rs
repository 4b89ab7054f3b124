use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use labelaudit_core::corpus::Format;

#[derive(Debug, Parser)]
#[command(
    name = "labelaudit",
    version,
    about = "Audit annotation quality across the sources of a labeled corpus"
)]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "LABELAUDIT_JOBS")]
    pub jobs: Option<usize>,

    /// Directory for outputs and manifests; relative config paths resolve here.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a corpus file.
    Ingest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_format)]
        format: Option<Format>,
    },
    /// Generate a synthetic corpus with a ledger of injected label flips.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-source label consistency for one or every source.
    Inconsistency {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Flag likely mislabeled instances of a target source.
    Discover {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        threshold: Option<u32>,
    },
    /// Retrain without flagged instances against a random-drop control.
    VerifyRemoval {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Incremental curves with and without adjudicated corrections.
    VerifyIncremental {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        corrections: Option<PathBuf>,
        /// Retrain from scratch at every step.
        #[arg(long)]
        cold_start: bool,
    },
    /// Odds ratios across demographic groups for each annotation variant.
    Bias {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Report e^coef ± z·SE instead of e^(coef ± z·SE).
        #[arg(long)]
        additive_ci: bool,
        #[arg(long)]
        z: Option<f64>,
    },
    /// Serve the adjudication API.
    ReviewServe {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, env = "LABELAUDIT_PORT")]
        port: Option<u16>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Render plot data and a summary from a run directory.
    Report {
        run_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub variable: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s.to_ascii_lowercase().as_str() {
        "jsonl" => Ok(Format::Jsonl),
        "csv" => Ok(Format::Csv),
        _ => Err(format!("unknown format {s:?}, expected jsonl or csv")),
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Synth { .. } => "synth",
            Command::Inconsistency { .. } => "inconsistency",
            Command::Discover { .. } => "discover",
            Command::VerifyRemoval { .. } => "verify-removal",
            Command::VerifyIncremental { .. } => "verify-incremental",
            Command::Bias { .. } => "bias",
            Command::ReviewServe { .. } => "review-serve",
            Command::Report { .. } => "report",
        }
    }
}

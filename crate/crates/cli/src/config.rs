use std::path::{Path, PathBuf};

use labelaudit_core::bias::{Axis, CiForm};
use labelaudit_core::classifier::encoder::EncoderConfig;
use labelaudit_core::classifier::train::TrainConfig;
use labelaudit_core::corpus::Format;
use labelaudit_core::discovery::DiscoveryConfig;
use labelaudit_core::inconsistency::InconsistencyConfig;
use labelaudit_core::synth::SynthSpec;
use labelaudit_core::verification::{IncrementalConfig, VerificationConfig};
use serde::{Deserialize, Serialize};

/// Everything a run reads. Relative paths resolve against the output
/// directory; the effective config stores them resolved.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub format: Option<Format>,
    pub variable: Option<String>,
    pub target_source: Option<String>,
    pub ledger: Option<PathBuf>,
    pub corrections: Option<PathBuf>,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub inconsistency: InconsistencyConfig,
    pub discovery: DiscoveryConfig,
    pub verification: VerificationConfig,
    pub incremental: IncrementalConfig,
    pub bias: BiasConfig,
    pub synth: SynthSpec,
    pub review: ReviewConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub z: f64,
    pub ci_form: CiForm,
    pub seed: u64,
    pub axes: Vec<Axis>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            z: 1.96,
            ci_form: CiForm::Exponentiated,
            seed: 0,
            axes: vec![Axis::Age, Axis::Race, Axis::Sex],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub store: Option<PathBuf>,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            store: None,
            port: 8080,
            static_dir: None,
        }
    }
}

impl RunConfig {
    /// Make every relative input path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.ledger,
            &mut self.corrections,
            &mut self.encoder.embedding_path,
            &mut self.review.store,
            &mut self.review.static_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn corpus_format(&self, path: &Path) -> Format {
        self.format.unwrap_or_else(|| {
            match path.extension().and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
                _ => Format::Jsonl,
            }
        })
    }
}

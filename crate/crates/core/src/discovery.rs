//! Flag likely mislabeled target-source instances by repeated k-fold
//! hold-out error counting over the union of the target source and the
//! other sources.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, EncoderConfig, FeatureCache, TrainConfig};
use crate::corpus::{self, Corpus, ViewItem};
use crate::error::{Error, Result};
use crate::rng;

const MAX_DEAL_ATTEMPTS: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub k: usize,
    pub repetitions: usize,
    pub threshold: u32,
    /// One seed per repetition.
    pub seeds: Vec<u64>,
    pub partition_seed: u64,
    pub min_positives: usize,
    pub allow_unbalanced: bool,
    /// Also count hold-out errors for other-source instances.
    pub record_all: bool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            k: 5,
            repetitions: 5,
            threshold: 5,
            seeds: vec![0, 1, 2, 3, 4],
            partition_seed: 0,
            min_positives: 10,
            allow_unbalanced: false,
            record_all: false,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Invalid(format!("k must be at least 2, got {}", self.k)));
        }
        if self.threshold < 1 || self.threshold as usize > self.repetitions {
            return Err(Error::Invalid(format!(
                "threshold must lie in 1..={}, got {}",
                self.repetitions, self.threshold
            )));
        }
        if self.seeds.len() != self.repetitions {
            return Err(Error::Invalid(format!(
                "{} repetitions need {} seeds, got {}",
                self.repetitions,
                self.repetitions,
                self.seeds.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCountLedger {
    pub variable: String,
    pub target_source: String,
    pub config: DiscoveryConfig,
    pub counts: BTreeMap<String, u32>,
    pub flags: Vec<String>,
    pub histogram: BTreeMap<u32, usize>,
    /// Hold-out probability from the last repetition, target instances only.
    pub model_probabilities: BTreeMap<String, f64>,
    /// Recorded label of each target instance.
    pub labels: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_counts: Option<BTreeMap<String, u32>>,
}

impl ErrorCountLedger {
    /// Ids with count ≥ `threshold`, sorted.
    pub fn flags_at(&self, threshold: u32) -> Vec<String> {
        self.counts
            .iter()
            .filter(|(_, &c)| c >= threshold)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn is_flagged(&self, id: &str) -> bool {
        self.counts
            .get(id)
            .is_some_and(|&c| c >= self.config.threshold)
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("error_count,frequency\n");
        for (count, freq) in &self.histogram {
            out.push_str(&format!("{count},{freq}\n"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagSummary {
    pub total: usize,
    pub flagged: usize,
    pub percent: f64,
}

/// Flag count over `total_annotations`, percent rounded to one decimal.
pub fn summarize_flags(ledger: &ErrorCountLedger, total_annotations: usize) -> FlagSummary {
    let flagged = ledger.flags.len();
    let percent = if total_annotations == 0 {
        0.0
    } else {
        (1000.0 * flagged as f64 / total_annotations as f64).round() / 10.0
    };
    FlagSummary {
        total: total_annotations,
        flagged,
        percent,
    }
}

/// Fold index per position of `items` after a seeded shuffle. Fold sizes
/// differ by at most one, larger folds first. Re-deals when some fold's
/// complement is single-class.
pub fn assign_folds(items: &[ViewItem], k: usize, seed: u64) -> Result<Vec<usize>> {
    if items.len() < k {
        return Err(Error::Insufficient(format!(
            "{} instances cannot fill {k} folds",
            items.len()
        )));
    }
    for attempt in 0..MAX_DEAL_ATTEMPTS {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng::derived_rng(seed, "folds", attempt));
        let base = items.len() / k;
        let extra = items.len() % k;
        let mut fold_of = vec![0usize; items.len()];
        let mut pos = 0;
        for f in 0..k {
            let size = base + usize::from(f < extra);
            for &i in &order[pos..pos + size] {
                fold_of[i] = f;
            }
            pos += size;
        }
        let ok = (0..k).all(|f| {
            let (n, p) = items
                .iter()
                .zip(&fold_of)
                .filter(|(_, &g)| g != f)
                .fold((0, 0), |(n, p), (it, _)| (n + 1, p + usize::from(it.label)));
            p > 0 && p < n
        });
        if ok {
            return Ok(fold_of);
        }
    }
    Err(Error::Training(format!(
        "could not deal {k} folds with two-class training data in {MAX_DEAL_ATTEMPTS} attempts"
    )))
}

struct FoldResult {
    repetition: usize,
    /// (position in union, mispredicted, probability)
    held_out: Vec<(usize, bool, f64)>,
}

pub fn run_discovery(
    corpus: &Corpus,
    variable: &str,
    target_source: &str,
    config: &DiscoveryConfig,
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<ErrorCountLedger> {
    config.validate()?;
    train_config.validate()?;
    let prepared = corpus::prepare_target_view(
        corpus,
        variable,
        target_source,
        config.partition_seed,
        config.min_positives,
        config.allow_unbalanced,
    )?;
    let union = &prepared.view.items;
    if union.is_empty() {
        return Err(Error::Insufficient("empty training union".into()));
    }
    let encoder = encoder_config.build()?;
    let cache = FeatureCache::for_items(encoder.as_ref(), corpus, union)?;
    let samples = cache.samples(union, 0)?;

    let deals: Vec<Vec<usize>> = config
        .seeds
        .iter()
        .map(|&s| assign_folds(union, config.k, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.repetitions)
        .flat_map(|r| (0..config.k).map(move |f| (r, f)))
        .collect();
    let results: Vec<FoldResult> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let fold_of = &deals[r];
            let train: Vec<_> = samples
                .iter()
                .zip(fold_of)
                .filter(|(_, &g)| g != f)
                .map(|(s, _)| *s)
                .collect();
            let cfg = train_config.with_seed(rng::derive_seed(config.seeds[r], "discovery-train", f as u64));
            let outcome = classifier::train::train(&train, None, cache.dim(), &cfg)?;
            let held_out = samples
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_of[*i] == f)
                .map(|(i, s)| {
                    let p = outcome.head.probability(s.features);
                    (i, (p > 0.5) != s.label, p)
                })
                .collect();
            Ok(FoldResult {
                repetition: r,
                held_out,
            })
        })
        .collect::<Result<_>>()?;

    let mut all_counts = vec![0u32; union.len()];
    let mut last_prob = vec![f64::NAN; union.len()];
    for res in &results {
        for &(i, wrong, p) in &res.held_out {
            all_counts[i] += u32::from(wrong);
            if res.repetition + 1 == config.repetitions {
                last_prob[i] = p;
            }
        }
    }

    let mut counts = BTreeMap::new();
    let mut model_probabilities = BTreeMap::new();
    let mut labels = BTreeMap::new();
    let mut other_counts = BTreeMap::new();
    for (i, item) in union.iter().enumerate() {
        if item.source == target_source {
            counts.insert(item.incident_id.clone(), all_counts[i]);
            model_probabilities.insert(item.incident_id.clone(), last_prob[i]);
            labels.insert(item.incident_id.clone(), item.label);
        } else if config.record_all {
            other_counts.insert(item.incident_id.clone(), all_counts[i]);
        }
    }
    let mut histogram: BTreeMap<u32, usize> =
        (0..=config.repetitions as u32).map(|c| (c, 0)).collect();
    for &c in counts.values() {
        *histogram.entry(c).or_default() += 1;
    }
    let mut ledger = ErrorCountLedger {
        variable: variable.to_string(),
        target_source: target_source.to_string(),
        config: config.clone(),
        counts,
        flags: Vec::new(),
        histogram,
        model_probabilities,
        labels,
        other_counts: config.record_all.then_some(other_counts),
    };
    ledger.flags = ledger.flags_at(config.threshold);
    Ok(ledger)
}

//! Annotation inconsistency between a target source and the other sources,
//! measured as ΔF1 over three equal-size training compositions:
//!
//! * `PureOthers`: two others-only training segments,
//! * `OthersTarget`: others training data followed by target training data,
//! * `TargetOthers`: the same data with the segments swapped.
//!
//! ΔF1 = mean(F1(OthersTarget), F1(TargetOthers)) − F1(PureOthers), computed
//! separately on the target test set and on the others test set. A positive
//! target ΔF1 with a negative others ΔF1 means the target source's labels
//! help on its own data but conflict with everyone else's.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, EncoderConfig, FeatureCache, TrainConfig};
use crate::corpus::{self, Corpus, CorpusPartition, ViewItem};
use crate::error::{Error, Result};
use crate::metrics::ConfusionCounts;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CompositionKind {
    PureOthers,
    OthersTarget,
    TargetOthers,
}

impl CompositionKind {
    pub const ALL: [CompositionKind; 3] = [
        CompositionKind::PureOthers,
        CompositionKind::OthersTarget,
        CompositionKind::TargetOthers,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Target,
    Others,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingComposition {
    pub kind: CompositionKind,
    /// Ordered training segments.
    pub segments: Vec<(Origin, Vec<ViewItem>)>,
    pub validation: Vec<ViewItem>,
    pub test_target: Vec<ViewItem>,
    pub test_others: Vec<ViewItem>,
}

impl TrainingComposition {
    pub fn train_len(&self) -> usize {
        self.segments.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn ordered_train_ids(&self) -> Vec<String> {
        self.segments
            .iter()
            .flat_map(|(_, s)| s.iter().map(|i| i.incident_id.clone()))
            .collect()
    }

    /// Training samples; adjacent segments of the same origin share a
    /// curriculum segment.
    pub fn train_samples<'a>(&'a self, cache: &'a FeatureCache) -> Result<Vec<classifier::Sample<'a>>> {
        let mut out = Vec::with_capacity(self.train_len());
        let mut tag = 0u32;
        let mut prev: Option<Origin> = None;
        for (origin, items) in &self.segments {
            if prev.is_some_and(|p| p != *origin) {
                tag += 1;
            }
            prev = Some(*origin);
            out.extend(cache.samples(items, tag)?);
        }
        Ok(out)
    }
}

/// The three compositions for exclusive subset `subset_index`. Splits and
/// the second others-only segment are drawn from `seed`.
pub fn build_compositions(
    partition: &CorpusPartition,
    subset_index: usize,
    seed: u64,
) -> Result<[TrainingComposition; 3]> {
    let m = partition.exclusive_subsets.len();
    if subset_index >= m {
        return Err(Error::Invalid(format!(
            "subset index {subset_index} out of range for {m} subsets"
        )));
    }
    let target = corpus::split_8_1_1(
        &partition.target_set,
        rng::derive_seed(seed, "target-split", 0),
    )?;
    let others = corpus::split_8_1_1(
        &partition.exclusive_subsets[subset_index],
        rng::derive_seed(seed, "others-split", subset_index as u64),
    )?;
    let remainder = partition.remainder();
    let need = target.train.len();
    if remainder.len() < need {
        return Err(Error::Insufficient(format!(
            "PureOthers needs {need} further others instances beyond the {m} exclusive subsets, \
             only {} remain",
            remainder.len()
        )));
    }
    let mut rng = rng::derived_rng(seed, "pure-others-second", subset_index as u64);
    let mut picked = rand::seq::index::sample(&mut rng, remainder.len(), need).into_vec();
    picked.sort_unstable();
    let second: Vec<ViewItem> = picked.into_iter().map(|i| remainder[i].clone()).collect();

    let validation: Vec<ViewItem> = target
        .validation
        .iter()
        .chain(&others.validation)
        .cloned()
        .collect();
    let make = |kind, segments| TrainingComposition {
        kind,
        segments,
        validation: validation.clone(),
        test_target: target.test.clone(),
        test_others: others.test.clone(),
    };
    Ok([
        make(
            CompositionKind::PureOthers,
            vec![(Origin::Others, others.train.clone()), (Origin::Others, second)],
        ),
        make(
            CompositionKind::OthersTarget,
            vec![
                (Origin::Others, others.train.clone()),
                (Origin::Target, target.train.clone()),
            ],
        ),
        make(
            CompositionKind::TargetOthers,
            vec![
                (Origin::Target, target.train.clone()),
                (Origin::Others, others.train.clone()),
            ],
        ),
    ])
}

/// Mean of the two mixed-composition F1 scores minus the PureOthers F1.
pub fn delta_f1(f1_pure: f64, f1_others_target: f64, f1_target_others: f64) -> f64 {
    0.5 * (f1_others_target + f1_target_others) - f1_pure
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InconsistencyConfig {
    /// Number of exclusive others subsets.
    pub m: usize,
    /// One training repetition per seed.
    pub seeds: Vec<u64>,
    pub partition_seed: u64,
    pub min_positives: usize,
    pub allow_unbalanced: bool,
}

impl Default for InconsistencyConfig {
    fn default() -> Self {
        InconsistencyConfig {
            m: 4,
            seeds: vec![0, 1, 2, 3, 4],
            partition_seed: 0,
            min_positives: 10,
            allow_unbalanced: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Cell {
    pub subset: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub kind: CompositionKind,
    pub f1_target: f64,
    pub f1_others: f64,
    pub counts_target: ConfusionCounts,
    pub counts_others: ConfusionCounts,
    pub selected_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindMeans {
    pub kind: CompositionKind,
    pub f1_target: f64,
    pub f1_others: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaF1Report {
    pub target_source: String,
    pub variable: String,
    pub m: usize,
    pub n: usize,
    pub x: usize,
    pub train_size: usize,
    pub cells: Vec<F1Cell>,
    pub means: Vec<KindMeans>,
    pub delta_f1_target: f64,
    pub delta_f1_others: f64,
}

/// Mean over seeds within each subset, then over subsets.
fn aggregate(cells: &[F1Cell], kind: CompositionKind, m: usize, pick: impl Fn(&F1Cell) -> f64) -> f64 {
    let mut total = 0.0;
    for j in 0..m {
        let vals: Vec<f64> = cells
            .iter()
            .filter(|c| c.kind == kind && c.subset == j)
            .map(&pick)
            .collect();
        total += vals.iter().sum::<f64>() / vals.len() as f64;
    }
    total / m as f64
}

impl DeltaF1Report {
    /// Recompute the means and both deltas from the raw cell grid.
    pub fn recompute(&self) -> (Vec<KindMeans>, f64, f64) {
        let means: Vec<KindMeans> = CompositionKind::ALL
            .iter()
            .map(|&kind| KindMeans {
                kind,
                f1_target: aggregate(&self.cells, kind, self.m, |c| c.f1_target),
                f1_others: aggregate(&self.cells, kind, self.m, |c| c.f1_others),
            })
            .collect();
        let d_target = delta_f1(means[0].f1_target, means[1].f1_target, means[2].f1_target);
        let d_others = delta_f1(means[0].f1_others, means[1].f1_others, means[2].f1_others);
        (means, d_target, d_others)
    }

    pub fn mean(&self, kind: CompositionKind) -> &KindMeans {
        self.means
            .iter()
            .find(|m| m.kind == kind)
            .expect("every kind is aggregated")
    }
}

pub fn run_state_inconsistency(
    corpus: &Corpus,
    variable: &str,
    target_source: &str,
    config: &InconsistencyConfig,
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<DeltaF1Report> {
    if config.m == 0 || config.seeds.is_empty() {
        return Err(Error::Invalid("m and the seed list must be non-empty".into()));
    }
    let prepared = corpus::prepare_target_view(
        corpus,
        variable,
        target_source,
        config.partition_seed,
        config.min_positives,
        config.allow_unbalanced,
    )?;
    let partition =
        CorpusPartition::build(&prepared.view, target_source, config.m, config.partition_seed)?;
    let encoder = encoder_config.build()?;
    let cache = FeatureCache::for_items(encoder.as_ref(), corpus, &prepared.view.items)?;

    let grid: Vec<(usize, usize, u64)> = (0..config.m)
        .flat_map(|j| config.seeds.iter().enumerate().map(move |(i, &s)| (j, i, s)))
        .collect();
    let compositions: Vec<(usize, usize, u64, [TrainingComposition; 3])> = grid
        .iter()
        .map(|&(j, i, s)| Ok((j, i, s, build_compositions(&partition, j, s)?)))
        .collect::<Result<_>>()?;
    let train_size = compositions[0].3[0].train_len();

    let jobs: Vec<(usize, usize, u64, &TrainingComposition)> = compositions
        .iter()
        .flat_map(|(j, i, s, comps)| comps.iter().map(move |c| (*j, *i, *s, c)))
        .collect();
    let mut cells: Vec<F1Cell> = jobs
        .par_iter()
        .map(|&(j, i, s, comp)| {
            let train = comp.train_samples(&cache)?;
            let val = cache.samples(&comp.validation, 0)?;
            let cfg = train_config.with_seed(rng::derive_seed(s, "inconsistency-train", j as u64));
            let outcome = classifier::train::train(&train, Some(&val), cache.dim(), &cfg)?;
            let counts_target = classifier::evaluate(&outcome.head, &cache.samples(&comp.test_target, 0)?);
            let counts_others = classifier::evaluate(&outcome.head, &cache.samples(&comp.test_others, 0)?);
            Ok(F1Cell {
                subset: j,
                seed_index: i,
                seed: s,
                kind: comp.kind,
                f1_target: counts_target.scores().f1,
                f1_others: counts_others.scores().f1,
                counts_target,
                counts_others,
                selected_epoch: outcome.selected_epoch,
            })
        })
        .collect::<Result<_>>()?;
    cells.sort_by_key(|c| (c.subset, c.seed_index, c.kind));

    let mut report = DeltaF1Report {
        target_source: target_source.to_string(),
        variable: variable.to_string(),
        m: config.m,
        n: config.seeds.len(),
        x: partition.x(),
        train_size,
        cells,
        means: Vec::new(),
        delta_f1_target: 0.0,
        delta_f1_others: 0.0,
    };
    let (means, dt, d_o) = report.recompute();
    report.means = means;
    report.delta_f1_target = dt;
    report.delta_f1_others = d_o;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub total: usize,
    pub positive_delta_target: usize,
    pub negative_delta_others: usize,
}

impl SourceSummary {
    pub fn from_reports(reports: &[DeltaF1Report]) -> Self {
        SourceSummary {
            total: reports.len(),
            positive_delta_target: reports.iter().filter(|r| r.delta_f1_target > 0.0).count(),
            negative_delta_others: reports.iter().filter(|r| r.delta_f1_others < 0.0).count(),
        }
    }

    pub fn describe(&self) -> String {
        let pct = |k: usize| {
            if self.total == 0 {
                0.0
            } else {
                100.0 * k as f64 / self.total as f64
            }
        };
        format!(
            "{} of {} positive ({:.1}%) on target test sets; {} of {} negative ({:.1}%) on others test sets",
            self.positive_delta_target,
            self.total,
            pct(self.positive_delta_target),
            self.negative_delta_others,
            self.total,
            pct(self.negative_delta_others)
        )
    }
}

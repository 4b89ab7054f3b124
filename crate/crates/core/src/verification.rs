//! Effect of removing or correcting flagged instances.
//!
//! Both experiments train on a mix of target-source and other-source
//! instances drawn by [`MixedSetup`]: the target view and the full others
//! pool are each split 8:1:1, and an others training sample the size of the
//! target training split is drawn. The others test split is the large, fixed
//! evaluation set.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, EncoderConfig, FeatureCache, Sample, TrainConfig, Trainer};
use crate::corpus::{self, Corpus, DatasetView, SplitPlan, ViewItem};
use crate::discovery::ErrorCountLedger;
use crate::error::{Error, Result};
use crate::metrics::{self, TTestResult};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    /// One repetition per seed; a seed drives splits, random drops and
    /// shuffling.
    pub seeds: Vec<u64>,
    pub partition_seed: u64,
    pub min_positives: usize,
    pub allow_unbalanced: bool,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            seeds: vec![0, 1, 2, 3, 4],
            partition_seed: 0,
            min_positives: 10,
            allow_unbalanced: false,
        }
    }
}

/// Splits for one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedSetup {
    pub target: SplitPlan,
    pub others_train: Vec<ViewItem>,
    pub others_validation: Vec<ViewItem>,
    pub others_test: Vec<ViewItem>,
}

impl MixedSetup {
    pub fn build(view: &DatasetView, target_source: &str, seed: u64) -> Result<Self> {
        let target_items = view.of_source(target_source);
        let others_items = view.excluding_source(target_source);
        let target = corpus::split_8_1_1(&target_items, rng::derive_seed(seed, "verify-target", 0))?;
        let others = corpus::split_8_1_1(&others_items, rng::derive_seed(seed, "verify-others", 0))?;
        let need = target.train.len();
        if others.train.len() < need {
            return Err(Error::Insufficient(format!(
                "others training split has {} instances, {need} needed",
                others.train.len()
            )));
        }
        let mut picked = rand::seq::index::sample(
            &mut rng::derived_rng(seed, "verify-others-sample", 0),
            others.train.len(),
            need,
        )
        .into_vec();
        picked.sort_unstable();
        Ok(MixedSetup {
            others_train: picked.into_iter().map(|i| others.train[i].clone()).collect(),
            others_validation: others.validation,
            others_test: others.test,
            target,
        })
    }

    pub fn validation(&self) -> Vec<ViewItem> {
        self.target
            .validation
            .iter()
            .chain(&self.others_validation)
            .cloned()
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Original,
    FlagsRemoved,
    RandomDropped,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Original, Arm::FlagsRemoved, Arm::RandomDropped];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    /// Others-test F1 per seed.
    pub f1: Vec<f64>,
    /// Training instances removed per seed.
    pub removed: Vec<usize>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalExperiment {
    pub variable: String,
    pub target_source: String,
    pub seeds: Vec<u64>,
    pub flags: usize,
    pub arms: Vec<ArmResult>,
    /// `None` when both samples have zero variance.
    pub t_test_flags_vs_original: Option<TTestResult>,
    pub t_test_flags_vs_random: Option<TTestResult>,
}

impl RemovalExperiment {
    pub fn arm(&self, arm: Arm) -> &ArmResult {
        self.arms.iter().find(|a| a.arm == arm).expect("all arms present")
    }

    /// Per-seed rows: seed, original, flags_removed, random_dropped.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("seed,original,flags_removed,random_dropped\n");
        for (i, seed) in self.seeds.iter().enumerate() {
            out.push_str(&format!(
                "{seed},{:.4},{:.4},{:.4}\n",
                self.arm(Arm::Original).f1[i],
                self.arm(Arm::FlagsRemoved).f1[i],
                self.arm(Arm::RandomDropped).f1[i]
            ));
        }
        out.push_str(&format!(
            "mean,{:.4},{:.4},{:.4}\n",
            self.arm(Arm::Original).mean,
            self.arm(Arm::FlagsRemoved).mean,
            self.arm(Arm::RandomDropped).mean
        ));
        out
    }
}

fn train_and_score(
    cache: &FeatureCache,
    train_items: &[ViewItem],
    validation: &[ViewItem],
    test: &[ViewItem],
    cfg: &TrainConfig,
) -> Result<f64> {
    let train = cache.samples(train_items, 0)?;
    let val = cache.samples(validation, 0)?;
    let outcome = classifier::train::train(&train, Some(&val), cache.dim(), cfg)?;
    Ok(classifier::evaluate(&outcome.head, &cache.samples(test, 0)?).scores().f1)
}

fn welch_or_none(a: &[f64], b: &[f64]) -> Result<Option<TTestResult>> {
    match metrics::welch_t(a, b) {
        Ok(t) => Ok(Some(t)),
        Err(Error::Statistics(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run_removal_experiment(
    corpus: &Corpus,
    ledger: &ErrorCountLedger,
    config: &VerificationConfig,
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<RemovalExperiment> {
    if ledger.flags.is_empty() {
        return Err(Error::Invalid("the flag list is empty".into()));
    }
    if config.seeds.is_empty() {
        return Err(Error::Invalid("at least one seed is required".into()));
    }
    let variable = ledger.variable.as_str();
    let target_source = ledger.target_source.as_str();
    let prepared = corpus::prepare_target_view(
        corpus,
        variable,
        target_source,
        config.partition_seed,
        config.min_positives,
        config.allow_unbalanced,
    )?;
    let flags: BTreeSet<&str> = ledger.flags.iter().map(String::as_str).collect();
    let target_items = prepared.view.of_source(target_source);
    if target_items
        .iter()
        .filter(|i| i.label)
        .all(|i| flags.contains(i.incident_id.as_str()))
    {
        return Err(Error::Insufficient(
            "the flags cover every positive target instance".into(),
        ));
    }
    let encoder = encoder_config.build()?;
    let cache = FeatureCache::for_items(encoder.as_ref(), corpus, &prepared.view.items)?;

    let setups: Vec<MixedSetup> = config
        .seeds
        .iter()
        .map(|&s| MixedSetup::build(&prepared.view, target_source, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Arm)> = (0..setups.len())
        .flat_map(|i| Arm::ALL.into_iter().map(move |a| (i, a)))
        .collect();
    let results: Vec<(usize, Arm, f64, usize)> = jobs
        .par_iter()
        .map(|&(i, arm)| {
            let setup = &setups[i];
            let seed = config.seeds[i];
            let target_train: Vec<ViewItem> = match arm {
                Arm::Original => setup.target.train.clone(),
                Arm::FlagsRemoved => setup
                    .target
                    .train
                    .iter()
                    .filter(|t| !flags.contains(t.incident_id.as_str()))
                    .cloned()
                    .collect(),
                Arm::RandomDropped => {
                    let drop = setup
                        .target
                        .train
                        .iter()
                        .filter(|t| flags.contains(t.incident_id.as_str()))
                        .count();
                    let dropped: BTreeSet<usize> = rand::seq::index::sample(
                        &mut rng::derived_rng(seed, "random-drop", 0),
                        setup.target.train.len(),
                        drop,
                    )
                    .into_iter()
                    .collect();
                    setup
                        .target
                        .train
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| !dropped.contains(k))
                        .map(|(_, t)| t.clone())
                        .collect()
                }
            };
            let removed = setup.target.train.len() - target_train.len();
            let train: Vec<ViewItem> = target_train
                .into_iter()
                .chain(setup.others_train.iter().cloned())
                .collect();
            let cfg = train_config.with_seed(rng::derive_seed(seed, "removal-train", 0));
            let f1 = train_and_score(&cache, &train, &setup.validation(), &setup.others_test, &cfg)?;
            Ok((i, arm, f1, removed))
        })
        .collect::<Result<_>>()?;

    let arms: Vec<ArmResult> = Arm::ALL
        .iter()
        .map(|&arm| {
            let mut rows: Vec<_> = results.iter().filter(|r| r.1 == arm).collect();
            rows.sort_by_key(|r| r.0);
            let f1: Vec<f64> = rows.iter().map(|r| r.2).collect();
            ArmResult {
                arm,
                mean: f1.iter().sum::<f64>() / f1.len() as f64,
                removed: rows.iter().map(|r| r.3).collect(),
                f1,
            }
        })
        .collect();
    let (orig, removed, random) = (&arms[0].f1, &arms[1].f1, &arms[2].f1);
    Ok(RemovalExperiment {
        variable: variable.to_string(),
        target_source: target_source.to_string(),
        seeds: config.seeds.clone(),
        flags: ledger.flags.len(),
        t_test_flags_vs_original: welch_or_none(orig, removed)?,
        t_test_flags_vs_random: welch_or_none(random, removed)?,
        arms,
    })
}

/// One adjudicated verdict on a flagged instance, as consumed by
/// [`apply_corrections`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub adjudication_id: String,
    pub incident_id: String,
    pub verdict: CorrectionVerdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionVerdict {
    Keep,
    Flip,
    Uncertain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectedView {
    pub variable: String,
    pub base_ids: Vec<String>,
    /// Corrected labels that differ from the base view.
    pub overrides: BTreeMap<String, bool>,
    /// Adjudication ids applied per incident, in order.
    pub provenance: BTreeMap<String, Vec<String>>,
    pub uncertain: Vec<String>,
}

impl CorrectedView {
    pub fn label_of(&self, item: &ViewItem) -> bool {
        self.overrides
            .get(&item.incident_id)
            .copied()
            .unwrap_or(item.label)
    }

    pub fn apply(&self, items: &[ViewItem]) -> Vec<ViewItem> {
        items
            .iter()
            .map(|i| ViewItem {
                label: self.label_of(i),
                ..i.clone()
            })
            .collect()
    }
}

/// Flip verdicts toggle the label, in order; keep and uncertain leave it.
pub fn apply_corrections(
    view: &DatasetView,
    flags: &[String],
    corrections: &[Correction],
) -> Result<CorrectedView> {
    let flagged: BTreeSet<&str> = flags.iter().map(String::as_str).collect();
    let base: BTreeMap<&str, bool> = view
        .items
        .iter()
        .map(|i| (i.incident_id.as_str(), i.label))
        .collect();
    let mut current: BTreeMap<String, bool> = BTreeMap::new();
    let mut provenance: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut uncertain = BTreeSet::new();
    for c in corrections {
        if !flagged.contains(c.incident_id.as_str()) {
            return Err(Error::Invalid(format!(
                "adjudication {} refers to unflagged instance {:?}",
                c.adjudication_id, c.incident_id
            )));
        }
        let &label = base
            .get(c.incident_id.as_str())
            .ok_or_else(|| Error::NotFound(format!("instance {:?} not in view", c.incident_id)))?;
        let entry = current.entry(c.incident_id.clone()).or_insert(label);
        match c.verdict {
            CorrectionVerdict::Flip => *entry = !*entry,
            CorrectionVerdict::Uncertain => {
                uncertain.insert(c.incident_id.clone());
            }
            CorrectionVerdict::Keep => {}
        }
        provenance
            .entry(c.incident_id.clone())
            .or_default()
            .push(c.adjudication_id.clone());
    }
    let overrides = current
        .into_iter()
        .filter(|(id, l)| base[id.as_str()] != *l)
        .collect();
    Ok(CorrectedView {
        variable: view.variable.clone(),
        base_ids: corpus::ids(&view.items),
        overrides,
        provenance,
        uncertain: uncertain.into_iter().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IncrementalComposition {
    OthersTarget,
    OthersCorrectedTarget,
    TargetOthers,
    CorrectedTargetOthers,
}

impl IncrementalComposition {
    pub const ALL: [IncrementalComposition; 4] = [
        IncrementalComposition::OthersTarget,
        IncrementalComposition::OthersCorrectedTarget,
        IncrementalComposition::TargetOthers,
        IncrementalComposition::CorrectedTargetOthers,
    ];

    fn target_first(self) -> bool {
        matches!(
            self,
            IncrementalComposition::TargetOthers | IncrementalComposition::CorrectedTargetOthers
        )
    }

    fn corrected(self) -> bool {
        matches!(
            self,
            IncrementalComposition::OthersCorrectedTarget
                | IncrementalComposition::CorrectedTargetOthers
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncrementalConfig {
    pub step_size: usize,
    /// Epochs per step with warm start.
    pub epochs_per_step: usize,
    /// Retrain from zero weights at every step for the full epoch budget.
    pub cold_start: bool,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            step_size: 100,
            epochs_per_step: 3,
            cold_start: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub instances_fed: usize,
    pub f1_target: f64,
    pub f1_others: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementalPlan {
    pub composition: IncrementalComposition,
    pub step_size: usize,
    pub total: usize,
    /// Mean over seeds.
    pub curve: Vec<CurvePoint>,
    pub per_seed: Vec<Vec<CurvePoint>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementalReport {
    pub variable: String,
    pub target_source: String,
    pub seeds: Vec<u64>,
    pub config: IncrementalConfig,
    pub plans: Vec<IncrementalPlan>,
    pub warnings: Vec<String>,
}

impl IncrementalReport {
    pub fn plan(&self, c: IncrementalComposition) -> &IncrementalPlan {
        self.plans
            .iter()
            .find(|p| p.composition == c)
            .expect("all compositions present")
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("composition,instances_fed,f1_target,f1_others,seed\n");
        for plan in &self.plans {
            for (seed, points) in self.seeds.iter().zip(&plan.per_seed) {
                for p in points {
                    out.push_str(&format!(
                        "{:?},{},{:.6},{:.6},{seed}\n",
                        plan.composition, p.instances_fed, p.f1_target, p.f1_others
                    ));
                }
            }
            for p in &plan.curve {
                out.push_str(&format!(
                    "{:?},{},{:.6},{:.6},mean\n",
                    plan.composition, p.instances_fed, p.f1_target, p.f1_others
                ));
            }
        }
        out
    }
}

/// Cumulative reveal points T, 2T, ..., N (final partial step included).
pub fn reveal_points(step: usize, total: usize) -> Vec<usize> {
    let mut points: Vec<usize> = (1..)
        .map(|k| k * step)
        .take_while(|&p| p < total)
        .collect();
    points.push(total);
    points
}

fn run_curve(
    ordered: &[Sample<'_>],
    test_target: &[Sample<'_>],
    test_others: &[Sample<'_>],
    dim: usize,
    inc: &IncrementalConfig,
    train_config: &TrainConfig,
) -> Result<Vec<CurvePoint>> {
    let mut trainer = Trainer::new(dim, train_config)?;
    let mut curve = Vec::new();
    for fed in reveal_points(inc.step_size, ordered.len()) {
        let revealed = &ordered[..fed];
        if inc.cold_start {
            trainer = Trainer::new(dim, train_config)?;
            for _ in 0..train_config.epochs {
                trainer.run_epoch(revealed)?;
            }
        } else {
            for _ in 0..inc.epochs_per_step {
                trainer.run_epoch(revealed)?;
            }
        }
        curve.push(CurvePoint {
            instances_fed: fed,
            f1_target: classifier::evaluate(trainer.head(), test_target).scores().f1,
            f1_others: classifier::evaluate(trainer.head(), test_others).scores().f1,
        });
    }
    Ok(curve)
}

/// Incremental training over the four orderings. The target test set is
/// scored against corrected labels in every composition.
pub fn run_incremental(
    corpus: &Corpus,
    ledger: &ErrorCountLedger,
    corrected: &CorrectedView,
    config: &VerificationConfig,
    inc: &IncrementalConfig,
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<IncrementalReport> {
    if inc.step_size == 0 {
        return Err(Error::Invalid("step size must be at least 1".into()));
    }
    if inc.epochs_per_step == 0 {
        return Err(Error::Invalid("epochs_per_step must be at least 1".into()));
    }
    if config.seeds.is_empty() {
        return Err(Error::Invalid("at least one seed is required".into()));
    }
    let variable = ledger.variable.as_str();
    let target_source = ledger.target_source.as_str();
    if corrected.variable != variable {
        return Err(Error::Invalid(format!(
            "corrections are for {:?}, ledger for {variable:?}",
            corrected.variable
        )));
    }
    let prepared = corpus::prepare_target_view(
        corpus,
        variable,
        target_source,
        config.partition_seed,
        config.min_positives,
        config.allow_unbalanced,
    )?;
    let encoder = encoder_config.build()?;
    let cache = FeatureCache::for_items(encoder.as_ref(), corpus, &prepared.view.items)?;
    let setups: Vec<MixedSetup> = config
        .seeds
        .iter()
        .map(|&s| MixedSetup::build(&prepared.view, target_source, s))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let total = setups[0].target.train.len() + setups[0].others_train.len();
    if inc.step_size > total {
        warnings.push(format!(
            "step size {} exceeds the {total} training instances; single-step run",
            inc.step_size
        ));
    }

    let jobs: Vec<(IncrementalComposition, usize)> = IncrementalComposition::ALL
        .into_iter()
        .flat_map(|c| (0..setups.len()).map(move |i| (c, i)))
        .collect();
    let curves: Vec<Vec<CurvePoint>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let setup = &setups[i];
            let target_train = if c.corrected() {
                corrected.apply(&setup.target.train)
            } else {
                setup.target.train.clone()
            };
            let (first, second) = if c.target_first() {
                (&target_train, &setup.others_train)
            } else {
                (&setup.others_train, &target_train)
            };
            let ordered = cache.segmented(&[first, second])?;
            let test_target_items = corrected.apply(&setup.target.test);
            let test_target = cache.samples(&test_target_items, 0)?;
            let test_others = cache.samples(&setup.others_test, 0)?;
            let cfg = train_config.with_seed(rng::derive_seed(config.seeds[i], "incremental-train", 0));
            run_curve(&ordered, &test_target, &test_others, cache.dim(), inc, &cfg)
        })
        .collect::<Result<_>>()?;

    let n = setups.len();
    let plans = IncrementalComposition::ALL
        .iter()
        .enumerate()
        .map(|(ci, &composition)| {
            let per_seed: Vec<Vec<CurvePoint>> = curves[ci * n..(ci + 1) * n].to_vec();
            let curve = (0..per_seed[0].len())
                .map(|p| CurvePoint {
                    instances_fed: per_seed[0][p].instances_fed,
                    f1_target: per_seed.iter().map(|s| s[p].f1_target).sum::<f64>() / n as f64,
                    f1_others: per_seed.iter().map(|s| s[p].f1_others).sum::<f64>() / n as f64,
                })
                .collect();
            IncrementalPlan {
                composition,
                step_size: inc.step_size,
                total,
                curve,
                per_seed,
            }
        })
        .collect();
    Ok(IncrementalReport {
        variable: variable.to_string(),
        target_source: target_source.to_string(),
        seeds: config.seeds.clone(),
        config: inc.clone(),
        plans,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn view(sources: &[(&str, usize)]) -> DatasetView {
        let items = sources
            .iter()
            .flat_map(|(s, n)| {
                (0..*n).map(move |i| ViewItem {
                    incident_id: format!("{s}-{i:04}"),
                    source: s.to_string(),
                    label: i % 2 == 0,
                })
            })
            .collect();
        DatasetView {
            variable: "v".into(),
            items,
        }
    }

    fn corr(id: &str, adj: &str, verdict: CorrectionVerdict) -> Correction {
        Correction {
            adjudication_id: adj.into(),
            incident_id: id.into(),
            verdict,
        }
    }

    #[test]
    fn mixed_setup_sizes_and_disjointness() {
        let v = view(&[("T", 100), ("A", 300), ("B", 300)]);
        let s = MixedSetup::build(&v, "T", 4).unwrap();
        assert_eq!(s.target.train.len(), 80);
        assert_eq!(s.others_train.len(), 80);
        assert_eq!(s.others_test.len(), 60);
        let train: BTreeSet<&str> = s
            .others_train
            .iter()
            .chain(&s.target.train)
            .map(|i| i.incident_id.as_str())
            .collect();
        for t in s.validation().iter().chain(&s.others_test).chain(&s.target.test) {
            assert!(!train.contains(t.incident_id.as_str()));
        }
        assert_eq!(s, MixedSetup::build(&v, "T", 4).unwrap());
    }

    #[test]
    fn corrections_flip_keep_uncertain() {
        let v = view(&[("T", 6)]);
        let flags: Vec<String> = ["T-0000", "T-0001", "T-0002"].map(String::from).to_vec();
        let cv = apply_corrections(
            &v,
            &flags,
            &[
                corr("T-0000", "a1", CorrectionVerdict::Flip),
                corr("T-0001", "a2", CorrectionVerdict::Keep),
                corr("T-0002", "a3", CorrectionVerdict::Uncertain),
            ],
        )
        .unwrap();
        assert_eq!(cv.overrides, BTreeMap::from([("T-0000".to_string(), false)]));
        assert_eq!(cv.uncertain, vec!["T-0002".to_string()]);
        let applied = cv.apply(&v.items);
        let changed = applied.iter().zip(&v.items).filter(|(a, b)| a.label != b.label).count();
        assert_eq!(changed, 1);
    }

    #[test]
    fn empty_corrections_are_identity() {
        let v = view(&[("T", 6)]);
        let cv = apply_corrections(&v, &[], &[]).unwrap();
        assert!(cv.overrides.is_empty());
        assert_eq!(cv.apply(&v.items), v.items);
    }

    #[test]
    fn double_flip_restores_label_and_keeps_provenance() {
        let v = view(&[("T", 4)]);
        let flags = vec!["T-0001".to_string()];
        let cv = apply_corrections(
            &v,
            &flags,
            &[
                corr("T-0001", "s1", CorrectionVerdict::Flip),
                corr("T-0001", "s2", CorrectionVerdict::Flip),
            ],
        )
        .unwrap();
        assert!(cv.overrides.is_empty());
        assert_eq!(cv.provenance["T-0001"], vec!["s1".to_string(), "s2".to_string()]);
    }

    #[test]
    fn unflagged_correction_rejected() {
        let v = view(&[("T", 4)]);
        let err = apply_corrections(&v, &[], &[corr("T-0001", "x", CorrectionVerdict::Flip)]);
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn reveal_points_boundaries() {
        assert_eq!(reveal_points(100, 250), vec![100, 200, 250]);
        assert_eq!(reveal_points(50, 100), vec![50, 100]);
        assert_eq!(reveal_points(100, 100), vec![100]);
        assert_eq!(reveal_points(500, 100), vec![100]);
    }

    proptest! {
        #[test]
        fn reveal_points_are_increasing_and_end_at_total(step in 1usize..50, total in 1usize..400) {
            let p = reveal_points(step, total);
            prop_assert_eq!(*p.last().unwrap(), total);
            prop_assert!(p.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] <= step));
            prop_assert_eq!(p.len(), total.div_ceil(step));
        }
    }
}

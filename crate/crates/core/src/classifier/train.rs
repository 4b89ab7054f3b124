//! Minibatch Adam training of the logistic head with per-epoch
//! validation-based model selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::SparseVector;
use super::head::{Adam, LogisticHead};
use crate::error::{Error, Result};
use crate::metrics::ConfusionCounts;
use crate::rng::{self, Rng};

/// One training or evaluation instance. `segment` tags the origin of the
/// instance (e.g. target vs other sources) for curriculum-ordered epochs.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub id: &'a str,
    pub features: &'a SparseVector,
    pub label: bool,
    pub segment: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep the order of contiguous same-segment runs each epoch and only
    /// shuffle inside them. Otherwise the whole list is shuffled.
    pub curriculum_ordered: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            seed: 0,
            curriculum_ordered: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning_rate must be a finite non-negative number".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Invalid(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Invalid("adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Epoch order over `samples` (indices).
fn epoch_order(samples: &[Sample<'_>], curriculum: bool, rng: &mut Rng) -> Vec<usize> {
    if curriculum {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut start = 0;
        while start < order.len() {
            let seg = samples[start].segment;
            let mut end = start + 1;
            while end < samples.len() && samples[end].segment == seg {
                end += 1;
            }
            order[start..end].shuffle(rng);
            start = end;
        }
        order
    } else {
        // canonical order first, so the result depends only on the multiset
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| samples[a].id.cmp(samples[b].id));
        order.shuffle(rng);
        order
    }
}

/// Stateful trainer: head, optimizer moments and shuffling stream. Used
/// directly for warm-started incremental training.
#[derive(Clone, Debug)]
pub struct Trainer {
    head: LogisticHead,
    adam: Adam,
    rng: Rng,
    config: TrainConfig,
    grad: Vec<f64>,
    epochs_run: usize,
}

impl Trainer {
    pub fn new(dim: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            head: LogisticHead::zeros(dim),
            adam: Adam::new(
                dim + 1,
                config.learning_rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_eps,
            ),
            rng: rng::derived_rng(config.seed, "train-shuffle", 0),
            config: config.clone(),
            grad: vec![0.0; dim + 1],
            epochs_run: 0,
        })
    }

    pub fn head(&self) -> &LogisticHead {
        &self.head
    }

    pub fn into_head(self) -> LogisticHead {
        self.head
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    /// One pass over `samples`; returns the mean minibatch loss.
    pub fn run_epoch(&mut self, samples: &[Sample<'_>]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        let order = epoch_order(samples, self.config.curriculum_ordered, &mut self.rng);
        let mut batch: Vec<(&SparseVector, bool)> = Vec::with_capacity(self.config.batch_size);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (samples[i].features, samples[i].label)));
            let loss = self.head.loss_and_gradient(&batch, &mut self.grad);
            if !loss.is_finite() {
                let max_abs = self
                    .head
                    .params()
                    .iter()
                    .fold(0.0f64, |m, p| m.max(p.abs()));
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {} batch {b}; max |param| = {max_abs:e}, \
                     learning rate {}",
                    self.epochs_run + 1,
                    self.config.learning_rate
                )));
            }
            self.adam.update(self.head.params_mut(), &self.grad);
            total += loss;
            batches += 1;
        }
        self.epochs_run += 1;
        Ok(total / batches as f64)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub head: LogisticHead,
    /// 1-based epoch of the returned weights.
    pub selected_epoch: usize,
    pub validation_f1: Option<f64>,
    pub epoch_losses: Vec<f64>,
}

pub fn predict_labels(head: &LogisticHead, samples: &[Sample<'_>]) -> Vec<bool> {
    samples
        .iter()
        .map(|s| head.probability(s.features) > 0.5)
        .collect()
}

pub fn confusion(head: &LogisticHead, samples: &[Sample<'_>]) -> ConfusionCounts {
    let pred = predict_labels(head, samples);
    let gold: Vec<bool> = samples.iter().map(|s| s.label).collect();
    ConfusionCounts::from_predictions(&pred, &gold).expect("equal lengths")
}

/// Train for `config.epochs` epochs. With a validation set the epoch with
/// the best validation F1 is returned (earliest on ties); without one the
/// final epoch is returned.
pub fn train(
    train_set: &[Sample<'_>],
    validation: Option<&[Sample<'_>]>,
    dim: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let positives = train_set.iter().filter(|s| s.label).count();
    if positives == 0 || positives == train_set.len() {
        return Err(Error::Training(format!(
            "training set of {} instances has a single class",
            train_set.len()
        )));
    }
    let mut trainer = Trainer::new(dim, config)?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, LogisticHead)> = None;
    for epoch in 1..=config.epochs {
        epoch_losses.push(trainer.run_epoch(train_set)?);
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let f1 = confusion(trainer.head(), val).scores().f1;
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, trainer.head().clone()));
            }
        }
    }
    Ok(match best {
        Some((f1, epoch, head)) => TrainOutcome {
            head,
            selected_epoch: epoch,
            validation_f1: Some(f1),
            epoch_losses,
        },
        None => TrainOutcome {
            selected_epoch: trainer.epochs_run(),
            head: trainer.into_head(),
            validation_f1: None,
            epoch_losses,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn random_sparse(rng: &mut impl rand::Rng, dim: usize, nnz: usize) -> SparseVector {
        let mut idx: Vec<u32> = rand::seq::index::sample(rng, dim, nnz)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        idx.sort_unstable();
        let values = idx.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        SparseVector {
            indices: idx,
            values,
        }
    }

    /// Central finite differences against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 12;
        for _case in 0..10 {
            let xs: Vec<SparseVector> = (0..5).map(|_| random_sparse(&mut rng, dim, 4)).collect();
            let ys: Vec<bool> = (0..5).map(|_| rng.gen_bool(0.5)).collect();
            let batch: Vec<(&SparseVector, bool)> = xs.iter().zip(ys.iter().copied()).collect();
            let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let head = LogisticHead::from_parts(weights, rng.gen_range(-1.0..1.0));
            let mut grad = vec![0.0; dim + 1];
            head.loss_and_gradient(&batch, &mut grad);
            let h = 1e-6;
            for (k, &analytic) in grad.iter().enumerate() {
                let mut plus = head.clone();
                plus.params_mut()[k] += h;
                let mut minus = head.clone();
                minus.params_mut()[k] -= h;
                let numeric = (plus.loss(&batch) - minus.loss(&batch)) / (2.0 * h);
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-5 || (numeric - analytic).abs() < 1e-10,
                    "param {k}: analytic {} numeric {numeric}",
                    analytic
                );
            }
        }
    }

    fn toy(n: usize, seed: u64) -> (Vec<SparseVector>, Vec<bool>, Vec<String>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = i % 2 == 0;
            let base = if y { 0 } else { 8 };
            let mut dense = vec![0.0; 16];
            for _ in 0..6 {
                dense[base + rng.gen_range(0..8)] += 1.0;
            }
            dense[rng.gen_range(0..16)] += 1.0;
            xs.push(SparseVector::from_dense(&dense));
            ys.push(y);
        }
        let ids = (0..n).map(|i| format!("id{i:03}")).collect();
        (xs, ys, ids)
    }

    fn samples<'a>(xs: &'a [SparseVector], ys: &[bool], ids: &'a [String]) -> Vec<Sample<'a>> {
        xs.iter()
            .zip(ys)
            .zip(ids)
            .map(|((x, &y), id)| Sample {
                id,
                features: x,
                label: y,
                segment: 0,
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let (xs, ys, ids) = toy(40, 1);
        let s = samples(&xs, &ys, &ids);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&s, None, 16, &cfg).unwrap();
        assert!(out.head.params().iter().all(|&p| p == 0.0));
        assert!(s.iter().all(|x| out.head.probability(x.features) == 0.5));
        assert!(predict_labels(&out.head, &s).iter().all(|&l| !l));
    }

    #[test]
    fn single_class_is_rejected() {
        let (xs, _, ids) = toy(10, 1);
        let ys = vec![true; 10];
        let s = samples(&xs, &ys, &ids);
        assert!(matches!(
            train(&s, None, 16, &TrainConfig::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn full_batch_loss_is_non_increasing_at_small_lr() {
        let (xs, ys, ids) = toy(64, 2);
        let s = samples(&xs, &ys, &ids);
        let batch: Vec<(&SparseVector, bool)> = s.iter().map(|x| (x.features, x.label)).collect();
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(16, &cfg).unwrap();
        let mut prev = trainer.head().loss(&batch);
        for _ in 0..30 {
            trainer.run_epoch(&s).unwrap();
            let now = trainer.head().loss(&batch);
            assert!(now <= prev + 1e-12, "{now} > {prev}");
            prev = now;
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys, ids) = toy(60, 4);
        let s = samples(&xs, &ys, &ids);
        let cfg = TrainConfig {
            seed: 17,
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&s, Some(&s[..20]), 16, &cfg).unwrap();
        let b = train(&s, Some(&s[..20]), 16, &cfg).unwrap();
        assert_eq!(a.head, b.head);
        assert_eq!(a.selected_epoch, b.selected_epoch);
    }

    #[test]
    fn shuffled_mode_depends_only_on_the_multiset() {
        let (xs, ys, ids) = toy(50, 5);
        let s = samples(&xs, &ys, &ids);
        let mut reversed = s.clone();
        reversed.reverse();
        let cfg = TrainConfig {
            curriculum_ordered: false,
            epochs: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let a = train(&s, None, 16, &cfg).unwrap();
        let b = train(&reversed, None, 16, &cfg).unwrap();
        assert_eq!(a.head, b.head);
    }

    #[test]
    fn curriculum_order_keeps_segments_in_place() {
        let (xs, ys, ids) = toy(30, 6);
        let mut s = samples(&xs, &ys, &ids);
        for (i, x) in s.iter_mut().enumerate() {
            x.segment = if i < 12 { 0 } else { 1 };
        }
        let mut rng = rng::rng(9);
        for _ in 0..5 {
            let order = epoch_order(&s, true, &mut rng);
            assert!(order[..12].iter().all(|&i| i < 12));
            assert!(order[12..].iter().all(|&i| i >= 12));
        }
    }

    #[test]
    fn separable_toy_reaches_high_validation_f1() {
        let (xs, ys, ids) = toy(200, 7);
        let s = samples(&xs, &ys, &ids);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let out = train(&s[..160], Some(&s[160..]), 16, &cfg).unwrap();
        assert!(out.validation_f1.unwrap() >= 0.95);
        assert!(out.selected_epoch >= 1 && out.selected_epoch <= cfg.epochs);
    }
}

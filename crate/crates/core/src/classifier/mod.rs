//! Binary text classifier over concatenated note pairs: a pluggable
//! [`Encoder`] feeding a logistic head trained with binary cross-entropy and
//! Adam.
//!
//! The logistic head starts from zero weights; the training seed only
//! drives minibatch shuffling, so a run is a pure function of its inputs.

pub mod encoder;
pub mod head;
pub mod train;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use encoder::{Encoder, EncoderConfig, EncoderKind, SparseVector};
pub use head::LogisticHead;
pub use train::{Sample, TrainConfig, TrainOutcome, Trainer};

use crate::corpus::{Corpus, ViewItem};
use crate::error::{Error, Result};
use crate::metrics::ConfusionCounts;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Encoded features keyed by incident id.
#[derive(Clone, Debug, Default)]
pub struct FeatureCache {
    dim: usize,
    features: HashMap<String, SparseVector>,
}

impl FeatureCache {
    /// Encode every listed incident (in parallel).
    pub fn build<'a, I>(encoder: &dyn Encoder, corpus: &Corpus, ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut ids: Vec<&str> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let encoded: Result<Vec<(String, SparseVector)>> = ids
            .par_iter()
            .map(|&id| {
                let inc = corpus
                    .get(id)
                    .ok_or_else(|| Error::NotFound(format!("incident {id:?}")))?;
                Ok((id.to_string(), encoder.encode(inc)?))
            })
            .collect();
        Ok(FeatureCache {
            dim: encoder.dim(),
            features: encoded?.into_iter().collect(),
        })
    }

    pub fn for_items(encoder: &dyn Encoder, corpus: &Corpus, items: &[ViewItem]) -> Result<Self> {
        Self::build(encoder, corpus, items.iter().map(|i| i.incident_id.as_str()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: &str) -> Result<&SparseVector> {
        self.features
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("no cached features for {id:?}")))
    }

    /// Samples for `items`, all tagged with `segment`.
    pub fn samples<'a>(&'a self, items: &'a [ViewItem], segment: u32) -> Result<Vec<Sample<'a>>> {
        items
            .iter()
            .map(|item| {
                Ok(Sample {
                    id: &item.incident_id,
                    features: self.get(&item.incident_id)?,
                    label: item.label,
                    segment,
                })
            })
            .collect()
    }

    /// Samples for consecutive segments, tagged 0, 1, 2, ...
    pub fn segmented<'a>(&'a self, segments: &[&'a [ViewItem]]) -> Result<Vec<Sample<'a>>> {
        let mut out = Vec::new();
        for (k, seg) in segments.iter().enumerate() {
            out.extend(self.samples(seg, k as u32)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub encoder_config: EncoderConfig,
    pub train_config: TrainConfig,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub selected_epoch: usize,
    /// Absent when training ran without a validation set.
    pub validation_f1: Option<f64>,
}

impl ModelCheckpoint {
    pub fn from_outcome(outcome: TrainOutcome, encoder: &EncoderConfig, train: &TrainConfig) -> Self {
        ModelCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            encoder_config: encoder.clone(),
            train_config: train.clone(),
            bias: outcome.head.bias(),
            weights: outcome.head.weights().to_vec(),
            selected_epoch: outcome.selected_epoch,
            validation_f1: outcome.validation_f1,
        }
    }

    pub fn head(&self) -> LogisticHead {
        LogisticHead::from_parts(self.weights.clone(), self.bias)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("checkpoint has non-finite weights".into()));
        }
        if self.selected_epoch > self.train_config.epochs {
            return Err(Error::Invalid(format!(
                "selected epoch {} exceeds configured epochs {}",
                self.selected_epoch, self.train_config.epochs
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: ModelCheckpoint = serde_json::from_str(&text)?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub incident_id: String,
    pub probability: f64,
    pub label: bool,
}

/// Probabilities and thresholded labels (label is 1 iff p > 0.5).
pub fn predict_samples(head: &LogisticHead, samples: &[Sample<'_>]) -> Vec<Prediction> {
    samples
        .iter()
        .map(|s| {
            let p = head.probability(s.features);
            Prediction {
                incident_id: s.id.to_string(),
                probability: p,
                label: p > 0.5,
            }
        })
        .collect()
}

/// Train a checkpoint on corpus items: encode, fit, select on validation.
pub fn train_checkpoint(
    corpus: &Corpus,
    train_items: &[ViewItem],
    val_items: &[ViewItem],
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<ModelCheckpoint> {
    let encoder = encoder_config.build()?;
    let all: Vec<ViewItem> = train_items.iter().chain(val_items).cloned().collect();
    let cache = FeatureCache::for_items(encoder.as_ref(), corpus, &all)?;
    let train = cache.samples(train_items, 0)?;
    let val = cache.samples(val_items, 0)?;
    let validation = if val.is_empty() { None } else { Some(&val[..]) };
    let outcome = train::train(&train, validation, cache.dim(), train_config)?;
    Ok(ModelCheckpoint::from_outcome(outcome, encoder_config, train_config))
}

/// Predict corpus incidents with a checkpoint.
pub fn predict(checkpoint: &ModelCheckpoint, corpus: &Corpus, ids: &[&str]) -> Result<Vec<Prediction>> {
    checkpoint.validate()?;
    let encoder = checkpoint.encoder_config.build()?;
    let head = checkpoint.head();
    ids.iter()
        .map(|&id| {
            let inc = corpus
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("incident {id:?}")))?;
            let p = head.probability(&encoder.encode(inc)?);
            Ok(Prediction {
                incident_id: id.to_string(),
                probability: p,
                label: p > 0.5,
            })
        })
        .collect()
}

pub fn evaluate(head: &LogisticHead, samples: &[Sample<'_>]) -> ConfusionCounts {
    train::confusion(head, samples)
}

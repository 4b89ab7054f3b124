//! Text → feature vector encoders.
//!
//! The default encoder concatenates the two notes around a separator token,
//! lowercases, splits on Unicode word boundaries, truncates to `max_tokens`
//! and hashes the n-grams into a signed bag normalized to unit L2 norm.
//!
//! Hashing is 64-bit FNV-1a over the UTF-8 bytes of the n-gram, tokens
//! joined by U+001F. The bucket is `hash & (hash_dim - 1)`; the sign comes
//! from a second FNV-1a pass seeded with [`SIGN_BASIS`], negative when its
//! top bit is set.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Incident;
use crate::error::{Error, Result};
use crate::rng::{fnv1a64, fnv1a64_with_basis};

pub const SEPARATOR_TOKEN: &str = "[SEP]";
pub const SIGN_BASIS: u64 = 0x84222325_cbf29ce4;
const NGRAM_JOIN: char = '\u{1f}';

/// Sparse vector with strictly increasing indices and no explicit zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut v = SparseVector::default();
        for (i, &x) in dense.iter().enumerate() {
            if x != 0.0 {
                v.indices.push(i as u32);
                v.values.push(x);
            }
        }
        v
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    HashedNgrams,
    Precomputed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub max_tokens: usize,
    pub ngram_orders: Vec<usize>,
    pub hash_dim: usize,
    pub embedding_path: Option<PathBuf>,
    pub embedding_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::HashedNgrams,
            max_tokens: 512,
            ngram_orders: vec![1, 2],
            hash_dim: 1 << 18,
            embedding_path: None,
            embedding_dim: 768,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Invalid("max_tokens must be at least 1".into()));
        }
        match self.kind {
            EncoderKind::HashedNgrams => {
                if !self.hash_dim.is_power_of_two() || self.hash_dim > 1 << 31 {
                    return Err(Error::Invalid(format!(
                        "hash_dim must be a power of two, got {}",
                        self.hash_dim
                    )));
                }
                if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
                    return Err(Error::Invalid(
                        "ngram_orders must be a non-empty set of positive integers".into(),
                    ));
                }
            }
            EncoderKind::Precomputed => {
                if self.embedding_path.is_none() {
                    return Err(Error::Invalid(
                        "precomputed encoder needs embedding_path".into(),
                    ));
                }
                if self.embedding_dim == 0 {
                    return Err(Error::Invalid("embedding_dim must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Encoder>> {
        self.validate()?;
        Ok(match self.kind {
            EncoderKind::HashedNgrams => Box::new(HashedNgramEncoder::new(self.clone())),
            EncoderKind::Precomputed => {
                let path = self.embedding_path.as_deref().expect("validated");
                Box::new(PrecomputedEncoder::load(path, self.embedding_dim)?)
            }
        })
    }
}

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, incident: &Incident) -> Result<SparseVector>;
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .unicode_words()
        .map(str::to_string)
        .collect()
}

/// Tokens of `note_a`, the separator, then tokens of `note_b`, truncated.
pub fn note_tokens(note_a: &str, note_b: &str, max_tokens: usize) -> Vec<String> {
    let mut tokens = tokenize(note_a);
    tokens.push(SEPARATOR_TOKEN.to_string());
    tokens.extend(tokenize(note_b));
    tokens.truncate(max_tokens);
    tokens
}

#[derive(Clone, Debug)]
pub struct HashedNgramEncoder {
    config: EncoderConfig,
}

impl HashedNgramEncoder {
    pub fn new(config: EncoderConfig) -> Self {
        HashedNgramEncoder { config }
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> SparseVector {
        let mask = (self.config.hash_dim - 1) as u64;
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        let mut key = String::new();
        for &order in &self.config.ngram_orders {
            if order > tokens.len() {
                continue;
            }
            for window in tokens.windows(order) {
                key.clear();
                for (i, t) in window.iter().enumerate() {
                    if i > 0 {
                        key.push(NGRAM_JOIN);
                    }
                    key.push_str(t);
                }
                let bucket = (fnv1a64(key.as_bytes()) & mask) as u32;
                let sign = if fnv1a64_with_basis(SIGN_BASIS, key.as_bytes()) >> 63 == 1 {
                    -1.0
                } else {
                    1.0
                };
                *acc.entry(bucket).or_insert(0.0) += sign;
            }
        }
        let mut v = SparseVector::default();
        for (i, x) in acc {
            if x != 0.0 {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        let norm = v.norm();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Encoder for HashedNgramEncoder {
    fn dim(&self) -> usize {
        self.config.hash_dim
    }

    fn encode(&self, incident: &Incident) -> Result<SparseVector> {
        if incident.note_a.trim().is_empty() && incident.note_b.trim().is_empty() {
            return Err(Error::Invalid(format!(
                "incident {:?} has no note text",
                incident.incident_id
            )));
        }
        let tokens = note_tokens(&incident.note_a, &incident.note_b, self.config.max_tokens);
        Ok(self.encode_tokens(&tokens))
    }
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    incident_id: String,
    vector: Vec<f64>,
}

/// Vectors computed outside this crate, keyed by incident id.
#[derive(Clone, Debug)]
pub struct PrecomputedEncoder {
    dim: usize,
    vectors: HashMap<String, SparseVector>,
}

impl PrecomputedEncoder {
    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), dim)
    }

    pub fn from_reader<R: BufRead>(reader: R, dim: usize) -> Result<Self> {
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if rec.vector.len() != dim {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "vector for {:?} has dimension {}, expected {dim}",
                        rec.incident_id,
                        rec.vector.len()
                    ),
                });
            }
            if rec.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("vector for {:?} is not finite", rec.incident_id),
                });
            }
            vectors.insert(rec.incident_id, SparseVector::from_dense(&rec.vector));
        }
        Ok(PrecomputedEncoder { dim, vectors })
    }
}

impl Encoder for PrecomputedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, incident: &Incident) -> Result<SparseVector> {
        self.vectors
            .get(&incident.incident_id)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(incident.incident_id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Demographics;

    fn incident(a: &str, b: &str) -> Incident {
        Incident {
            incident_id: "t1".into(),
            source: "S".into(),
            note_a: a.into(),
            note_b: b.into(),
            demographics: Demographics::default(),
            labels: Default::default(),
        }
    }

    fn small(orders: Vec<usize>, max_tokens: usize) -> HashedNgramEncoder {
        HashedNgramEncoder::new(EncoderConfig {
            hash_dim: 1 << 12,
            ngram_orders: orders,
            max_tokens,
            ..EncoderConfig::default()
        })
    }

    #[test]
    fn tokenizer_lowercases_and_splits_words() {
        assert_eq!(
            tokenize("He ARGUED with his wife, then left."),
            vec!["he", "argued", "with", "his", "wife", "then", "left"]
        );
    }

    #[test]
    fn empty_note_b_is_note_a_plus_separator() {
        let enc = small(vec![1, 2], 512);
        let direct = enc.encode(&incident("family argument", "")).unwrap();
        let mut tokens = tokenize("family argument");
        tokens.push(SEPARATOR_TOKEN.into());
        assert_eq!(direct, enc.encode_tokens(&tokens));
    }

    #[test]
    fn encoding_is_deterministic_and_unit_norm() {
        let enc = small(vec![1, 2], 512);
        let inc = incident("victim had a fight with his brother", "no note left");
        let a = enc.encode(&inc).unwrap();
        let b = enc.encode(&inc).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn truncation_matches_manual_pretruncation() {
        let enc = small(vec![1, 2], 512);
        let words: Vec<String> = (0..600).map(|i| format!("w{}", i % 97)).collect();
        let long = words.join(" ");
        let manual = words[..512].join(" ");
        let full = enc.encode(&incident(&long, "")).unwrap();
        let cut = enc.encode(&incident(&manual, "")).unwrap();
        assert_eq!(full, cut);
        // and differs from the untruncated bag
        let wide = small(vec![1, 2], 10_000);
        assert_ne!(wide.encode(&incident(&long, "")).unwrap(), full);
    }

    #[test]
    fn text_free_incident_is_an_error() {
        let enc = small(vec![1], 512);
        assert!(enc.encode(&incident("  ", "")).is_err());
    }

    #[test]
    fn precomputed_lookup_and_miss() {
        let text = "{\"incident_id\":\"t1\",\"vector\":[0.5,0.0,-1.0]}\n";
        let enc = PrecomputedEncoder::from_reader(text.as_bytes(), 3).unwrap();
        let v = enc.encode(&incident("a", "")).unwrap();
        assert_eq!(v.indices, vec![0, 2]);
        let mut other = incident("a", "");
        other.incident_id = "zz".into();
        match enc.encode(&other) {
            Err(Error::MissingEmbedding(id)) => assert_eq!(id, "zz"),
            r => panic!("{r:?}"),
        }
        assert!(PrecomputedEncoder::from_reader(text.as_bytes(), 4).is_err());
    }

    #[test]
    fn config_validation() {
        for c in [
            EncoderConfig { hash_dim: 1000, ..Default::default() },
            EncoderConfig { max_tokens: 0, ..Default::default() },
            EncoderConfig { kind: EncoderKind::Precomputed, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn unigram_bag_ignores_token_order(words in proptest::collection::vec("[a-z]{1,6}", 1..30), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let enc = small(vec![1], 512);
                let mut shuffled = words.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = enc.encode(&incident(&words.join(" "), "")).unwrap();
                let b = enc.encode(&incident(&shuffled.join(" "), "")).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}

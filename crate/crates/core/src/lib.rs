//! Cross-source annotation-quality auditing for multi-source binary
//! text-classification corpora.
//!
//! The pipeline has four stages:
//!
//! 1. [`inconsistency`]: measure whether a target source labels differently
//!    from the pooled other sources, via ΔF1 over three equal-size training
//!    compositions.
//! 2. [`discovery`]: flag likely mislabeled target-source instances by
//!    repeated k-fold hold-out error counting.
//! 3. [`verification`]: retrain without (or with corrected) flagged
//!    instances and compare against a random-drop control.
//! 4. [`bias`]: odds ratios of each circumstance variable across demographic
//!    groups, before and after removing flags.
//!
//! [`review`] stores human adjudications of flags and [`synth`] generates
//! corpora with known injected label noise for testing all of the above.

pub mod bias;
pub mod classifier;
pub mod corpus;
pub mod discovery;
pub mod error;
pub mod inconsistency;
pub mod metrics;
pub mod review;
pub mod rng;
pub mod synth;
pub mod verification;

pub use error::{Error, Result};

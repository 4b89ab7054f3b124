//! Synthetic multi-source corpora with known, injected label noise.
//!
//! Each incident has a true class and a cue group. Notes are token
//! sequences: each position is a class-theme token with probability equal
//! to the instance's signal strength (drawn from the instance's own theme
//! with probability `theme_purity`, the opposite theme otherwise), a token
//! of its cue group with probability `cue_strength`, and filler otherwise.
//! Cue groups are independent of the class, so on clean data they carry no
//! label information.
//!
//! Label noise is applied per source after generation. Flips are either
//! uniform over eligible instances, or concentrated in one cue group per
//! direction, which models a source-specific coding convention that a
//! linear model can pick up. The [`NoiseLedger`] records every flip and is
//! meant for test oracles only.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Demographics, Incident, Label, Race, Sex};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub positive_theme: Vec<String>,
    pub negative_theme: Vec<String>,
    pub filler: Vec<String>,
    pub cue_groups: Vec<Vec<String>>,
}

impl Default for Vocab {
    fn default() -> Self {
        let gen = |prefix: &str, n: usize| -> Vec<String> {
            (0..n).map(|i| format!("{prefix}{i:02}")).collect()
        };
        Vocab {
            positive_theme: gen("pos", 20),
            negative_theme: gen("neg", 20),
            filler: (0..200).map(|i| format!("w{i:03}")).collect(),
            cue_groups: (0..3).map(|g| gen(&format!("cue{g}x"), 8)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    #[default]
    Symmetric,
    PosToNeg,
    NegToPos,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FlipSelection {
    #[default]
    Uniform,
    /// Negative→positive flips are taken from cue group `to_positive` and
    /// positive→negative flips from `to_negative` first, spilling over to
    /// other instances only if the group runs out.
    Cue {
        to_positive: usize,
        to_negative: usize,
    },
}

/// Restrict flips to one demographic subgroup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub youth: Option<bool>,
    pub race: Option<Race>,
    pub sex: Option<Sex>,
}

impl Subgroup {
    fn contains(&self, d: &Demographics) -> bool {
        let youth_ok = self
            .youth
            .is_none_or(|y| d.age_years.is_some_and(|a| (a < 24) == y));
        youth_ok && self.race.is_none_or(|r| d.race == r) && self.sex.is_none_or(|s| d.sex == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisePlan {
    pub flip_rate: f64,
    pub direction: FlipDirection,
    pub selection: FlipSelection,
    pub subgroup: Option<Subgroup>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemographicMarginals {
    pub youth_rate: f64,
    pub missing_age_rate: f64,
    pub black_rate: f64,
    pub white_rate: f64,
    pub female_rate: f64,
}

impl Default for DemographicMarginals {
    fn default() -> Self {
        DemographicMarginals {
            youth_rate: 0.2,
            missing_age_rate: 0.02,
            black_rate: 0.15,
            white_rate: 0.75,
            female_rate: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub sources: usize,
    pub instances_per_source: usize,
    pub positive_fraction: f64,
    pub variable: String,
    pub vocab: Vocab,
    /// Mean fraction of theme tokens per note.
    pub signal_strength: f64,
    /// Per-instance signal is `signal_strength * (1 + spread * u)`, u ~ U(-1, 1).
    pub signal_spread: f64,
    pub theme_purity: f64,
    pub cue_strength: f64,
    pub note_length: (usize, usize),
    /// Keyed by source name; sources not listed are clean.
    pub noise_plan: BTreeMap<String, NoisePlan>,
    pub demographics: DemographicMarginals,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sources: 10,
            instances_per_source: 600,
            positive_fraction: 0.5,
            variable: "family".into(),
            vocab: Vocab::default(),
            signal_strength: 0.3,
            signal_spread: 0.0,
            theme_purity: 1.0,
            cue_strength: 0.1,
            note_length: (20, 40),
            noise_plan: BTreeMap::new(),
            demographics: DemographicMarginals::default(),
            seed: 0,
        }
    }
}

/// Source names in generation order: S01, S02, ...
pub fn source_name(index: usize) -> String {
    format!("S{:02}", index + 1)
}

impl SynthSpec {
    pub fn source_names(&self) -> Vec<String> {
        (0..self.sources).map(source_name).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.vocab;
        if v.positive_theme.is_empty() || v.negative_theme.is_empty() || v.filler.is_empty() {
            return Err(Error::Invalid("vocabulary classes must be non-empty".into()));
        }
        if v.cue_groups.iter().any(Vec::is_empty) {
            return Err(Error::Invalid("cue groups must be non-empty".into()));
        }
        let mut seen = BTreeSet::new();
        let all = v
            .positive_theme
            .iter()
            .chain(&v.negative_theme)
            .chain(&v.filler)
            .chain(v.cue_groups.iter().flatten());
        for t in all {
            if !seen.insert(t) {
                return Err(Error::Invalid(format!("token {t:?} appears in two vocabulary sets")));
            }
        }
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        unit("signal_strength", self.signal_strength)?;
        unit("signal_spread", self.signal_spread)?;
        unit("theme_purity", self.theme_purity)?;
        unit("cue_strength", self.cue_strength)?;
        unit("positive_fraction", self.positive_fraction)?;
        if self.signal_strength * (1.0 + self.signal_spread) + self.cue_strength > 1.0 {
            return Err(Error::Invalid("signal plus cue strength exceeds 1".into()));
        }
        if self.note_length.0 == 0 || self.note_length.0 > self.note_length.1 {
            return Err(Error::Invalid("note_length must be a non-empty range".into()));
        }
        for (source, plan) in &self.noise_plan {
            if !(0.0..0.5).contains(&plan.flip_rate) {
                return Err(Error::Invalid(format!(
                    "flip_rate for {source} must lie in [0, 0.5), got {}",
                    plan.flip_rate
                )));
            }
            if let FlipSelection::Cue {
                to_positive,
                to_negative,
            } = plan.selection
            {
                let groups = v.cue_groups.len();
                if to_positive >= groups || to_negative >= groups {
                    return Err(Error::Invalid(format!(
                        "cue selection for {source} names a group beyond the {groups} defined"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub source: String,
    pub true_label: bool,
    pub recorded_label: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseLedger {
    pub variable: String,
    pub flips: BTreeMap<String, FlipRecord>,
    pub per_source: BTreeMap<String, usize>,
}

impl NoiseLedger {
    pub fn flipped_ids(&self) -> BTreeSet<&str> {
        self.flips.keys().map(String::as_str).collect()
    }

    pub fn is_flipped(&self, id: &str) -> bool {
        self.flips.contains_key(id)
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub ledger: NoiseLedger,
    /// Cue group of every incident, for analysis.
    pub cue_group: BTreeMap<String, usize>,
}

struct Draft {
    id: String,
    source: String,
    label: bool,
    cue: usize,
    demographics: Demographics,
    note_a: String,
    note_b: String,
}

fn pick<'a>(rng: &mut Rng, tokens: &'a [String]) -> &'a str {
    &tokens[rng.gen_range(0..tokens.len())]
}

fn note(spec: &SynthSpec, rng: &mut Rng, label: bool, cue: usize, signal: f64) -> String {
    let v = &spec.vocab;
    let len = rng.gen_range(spec.note_length.0..=spec.note_length.1);
    let (own, other) = if label {
        (&v.positive_theme, &v.negative_theme)
    } else {
        (&v.negative_theme, &v.positive_theme)
    };
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let u: f64 = rng.gen();
        let w = if u < signal {
            if rng.gen_bool(spec.theme_purity) {
                pick(rng, own)
            } else {
                pick(rng, other)
            }
        } else if u < signal + spec.cue_strength && !v.cue_groups.is_empty() {
            pick(rng, &v.cue_groups[cue])
        } else {
            pick(rng, &v.filler)
        };
        words.push(w);
    }
    words.join(" ")
}

fn demographics(m: &DemographicMarginals, rng: &mut Rng) -> Demographics {
    let age_years = if rng.gen_bool(m.missing_age_rate) {
        None
    } else if rng.gen_bool(m.youth_rate) {
        Some(rng.gen_range(12..24))
    } else {
        Some(rng.gen_range(24..90))
    };
    let r: f64 = rng.gen();
    let race = if r < m.black_rate {
        Race::Black
    } else if r < m.black_rate + m.white_rate {
        Race::White
    } else {
        Race::Other
    };
    let sex = if rng.gen_bool(m.female_rate) {
        Sex::Female
    } else {
        Sex::Male
    };
    Demographics {
        age_years,
        sex,
        race,
    }
}

/// Ids to flip for one source, per the plan.
fn choose_flips(
    drafts: &[&Draft],
    plan: &NoisePlan,
    rng: &mut Rng,
    source: &str,
) -> Result<Vec<usize>> {
    let n = drafts.len();
    let total = (plan.flip_rate * n as f64).round() as usize;
    let (to_neg, to_pos) = match plan.direction {
        FlipDirection::Symmetric => (total / 2, total - total / 2),
        FlipDirection::PosToNeg => (total, 0),
        FlipDirection::NegToPos => (0, total),
    };
    let mut chosen = Vec::with_capacity(total);
    for (from_label, count) in [(true, to_neg), (false, to_pos)] {
        if count == 0 {
            continue;
        }
        let eligible: Vec<usize> = (0..n)
            .filter(|&i| drafts[i].label == from_label)
            .filter(|&i| plan.subgroup.is_none_or(|g| g.contains(&drafts[i].demographics)))
            .collect();
        if eligible.len() < count {
            return Err(Error::Insufficient(format!(
                "source {source}: need {count} flips from label {} but only {} instances are eligible",
                u8::from(from_label),
                eligible.len()
            )));
        }
        let preferred_group = match plan.selection {
            FlipSelection::Uniform => None,
            FlipSelection::Cue {
                to_positive,
                to_negative,
            } => Some(if from_label { to_negative } else { to_positive }),
        };
        let (mut first, mut rest): (Vec<usize>, Vec<usize>) = eligible
            .into_iter()
            .partition(|&i| preferred_group == Some(drafts[i].cue));
        first.shuffle(rng);
        rest.shuffle(rng);
        chosen.extend(first.into_iter().chain(rest).take(count));
    }
    Ok(chosen)
}

/// Generate a corpus and its noise ledger. Fully determined by the spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut drafts = Vec::with_capacity(spec.sources * spec.instances_per_source);
    for s in 0..spec.sources {
        let source = source_name(s);
        let mut rng = rng::derived_rng(spec.seed, &format!("synth:{source}"), 0);
        let n = spec.instances_per_source;
        let n_pos = (spec.positive_fraction * n as f64).round() as usize;
        let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        labels.shuffle(&mut rng);
        let groups = spec.vocab.cue_groups.len().max(1);
        for (i, &label) in labels.iter().enumerate() {
            let cue = rng.gen_range(0..groups);
            let signal = spec.signal_strength * (1.0 + spec.signal_spread * rng.gen_range(-1.0..=1.0));
            let note_a = note(spec, &mut rng, label, cue, signal);
            let note_b = note(spec, &mut rng, label, cue, signal);
            drafts.push(Draft {
                id: format!("{source}-{:05}", i + 1),
                source: source.clone(),
                label,
                cue,
                demographics: demographics(&spec.demographics, &mut rng),
                note_a,
                note_b,
            });
        }
    }

    let mut ledger = NoiseLedger {
        variable: spec.variable.clone(),
        ..NoiseLedger::default()
    };
    let mut flipped = BTreeSet::new();
    for (source, plan) in &spec.noise_plan {
        let members: Vec<&Draft> = drafts.iter().filter(|d| &d.source == source).collect();
        if members.is_empty() {
            return Err(Error::Invalid(format!("noise plan names unknown source {source:?}")));
        }
        let mut rng = rng::derived_rng(spec.seed, &format!("noise:{source}"), 0);
        let chosen = choose_flips(&members, plan, &mut rng, source)?;
        ledger.per_source.insert(source.clone(), chosen.len());
        for i in chosen {
            let d = members[i];
            flipped.insert(d.id.clone());
            ledger.flips.insert(
                d.id.clone(),
                FlipRecord {
                    source: source.clone(),
                    true_label: d.label,
                    recorded_label: !d.label,
                },
            );
        }
    }

    let cue_group = drafts.iter().map(|d| (d.id.clone(), d.cue)).collect();
    let incidents = drafts
        .into_iter()
        .map(|d| {
            let recorded = d.label ^ flipped.contains(&d.id);
            let mut labels = BTreeMap::new();
            labels.insert(spec.variable.clone(), Label::from_bool(recorded));
            Incident {
                incident_id: d.id,
                source: d.source,
                note_a: d.note_a,
                note_b: d.note_b,
                demographics: d.demographics,
                labels,
            }
        })
        .collect();
    Ok(SynthOutput {
        corpus: Corpus::new(incidents)?,
        ledger,
        cue_group,
    })
}

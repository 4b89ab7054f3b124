//! Corpus ingestion, sparse-source exclusion, per-source class balancing,
//! stratified 8:1:1 splitting and exclusive subset sampling.
//!
//! JSONL is the canonical interchange format. One record per line:
//!
//! ```text
//! {"incident_id": "OH-0001", "source": "OH", "note_a": "...", "note_b": "...",
//!  "age": 31, "sex": "female", "race": "white", "labels": {"family": 1}}
//! ```
//!
//! Label values are `0`, `1` or `"unknown"`. Incidents whose label for a
//! variable is unknown never enter a [`DatasetView`] for that variable.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Absent,
    Present,
    Unknown,
}

impl Label {
    pub fn from_bool(present: bool) -> Self {
        if present {
            Label::Present
        } else {
            Label::Absent
        }
    }

    pub fn known(self) -> Option<bool> {
        match self {
            Label::Absent => Some(false),
            Label::Present => Some(true),
            Label::Unknown => None,
        }
    }

    fn from_json(value: &Value) -> Option<Label> {
        match value {
            Value::Number(n) => match n.as_u64() {
                Some(0) => Some(Label::Absent),
                Some(1) => Some(Label::Present),
                _ => None,
            },
            Value::String(s) => Label::from_token(s),
            Value::Null => Some(Label::Unknown),
            _ => None,
        }
    }

    /// Parse a textual token: `0`, `1` or `unknown` (case-insensitive).
    pub fn from_token(token: &str) -> Option<Label> {
        match token.trim() {
            "0" => Some(Label::Absent),
            "1" => Some(Label::Present),
            t if t.eq_ignore_ascii_case("unknown") => Some(Label::Unknown),
            _ => None,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Absent => s.serialize_u8(0),
            Label::Present => s.serialize_u8(1),
            Label::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Label::from_json(&v)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid label token {v}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    Other,
    #[default]
    Unknown,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    Black,
    White,
    Other,
    #[default]
    Unknown,
}

impl Sex {
    fn parse(token: &str) -> Option<Sex> {
        match token.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Some(Sex::Female),
            "male" | "m" => Some(Sex::Male),
            "other" => Some(Sex::Other),
            "unknown" | "" => Some(Sex::Unknown),
            _ => None,
        }
    }
}

impl Race {
    fn parse(token: &str) -> Option<Race> {
        match token.trim().to_ascii_lowercase().as_str() {
            "black" => Some(Race::Black),
            "white" => Some(Race::White),
            "other" => Some(Race::Other),
            "unknown" | "" => Some(Race::Unknown),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age_years: Option<u32>,
    pub sex: Sex,
    pub race: Race,
}

/// One death record.
#[derive(Clone, Debug, PartialEq)]
pub struct Incident {
    pub incident_id: String,
    pub source: String,
    pub note_a: String,
    pub note_b: String,
    pub demographics: Demographics,
    pub labels: BTreeMap<String, Label>,
}

impl Incident {
    pub fn label(&self, variable: &str) -> Label {
        self.labels.get(variable).copied().unwrap_or(Label::Unknown)
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    incident_id: &'a str,
    source: &'a str,
    note_a: &'a str,
    note_b: &'a str,
    age: Option<u32>,
    sex: Sex,
    race: Race,
    labels: &'a BTreeMap<String, Label>,
}

#[derive(Deserialize)]
struct RecordIn {
    incident_id: Option<String>,
    source: Option<String>,
    #[serde(default)]
    note_a: Option<String>,
    #[serde(default)]
    note_b: Option<String>,
    #[serde(default)]
    age: Option<Value>,
    #[serde(default)]
    sex: Option<String>,
    #[serde(default)]
    race: Option<String>,
    #[serde(default)]
    labels: BTreeMap<String, Value>,
}

/// A record that was skipped during ingestion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub incident_id: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    incidents: Vec<Incident>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Build a corpus, rejecting duplicate ids. Line numbers in errors are
    /// 1-based positions in `incidents`.
    pub fn new(incidents: Vec<Incident>) -> Result<Self> {
        let mut index = HashMap::with_capacity(incidents.len());
        for (i, inc) in incidents.iter().enumerate() {
            if let Some(&first) = index.get(&inc.incident_id) {
                return Err(Error::DuplicateId {
                    id: inc.incident_id.clone(),
                    line: i + 1,
                    first_line: first + 1,
                });
            }
            index.insert(inc.incident_id.clone(), i);
        }
        Ok(Corpus { incidents, index })
    }

    pub fn incidents(&self) -> &[Incident] {
        &self.incidents
    }

    pub fn get(&self, incident_id: &str) -> Option<&Incident> {
        self.index.get(incident_id).map(|&i| &self.incidents[i])
    }

    pub fn len(&self) -> usize {
        self.incidents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidents.is_empty()
    }

    pub fn sources(&self) -> BTreeSet<&str> {
        self.incidents.iter().map(|i| i.source.as_str()).collect()
    }

    pub fn has_variable(&self, variable: &str) -> bool {
        self.incidents.iter().any(|i| i.labels.contains_key(variable))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for inc in &self.incidents {
            let rec = RecordOut {
                incident_id: &inc.incident_id,
                source: &inc.source,
                note_a: &inc.note_a,
                note_b: &inc.note_b,
                age: inc.demographics.age_years,
                sex: inc.demographics.sex,
                race: inc.demographics.race,
                labels: &inc.labels,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<corpus output>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// A copy of the corpus with some labels replaced.
    pub fn with_labels(&self, variable: &str, overrides: &BTreeMap<String, bool>) -> Corpus {
        let incidents = self
            .incidents
            .iter()
            .map(|inc| match overrides.get(&inc.incident_id) {
                Some(&v) => {
                    let mut inc = inc.clone();
                    inc.labels.insert(variable.to_string(), Label::from_bool(v));
                    inc
                }
                None => inc.clone(),
            })
            .collect();
        Corpus {
            incidents,
            index: self.index.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub rejected: Vec<RecordError>,
}

pub fn ingest(path: &Path, format: Format) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(file)),
        Format::Csv => read_csv(file),
    }
}

struct RawRecord {
    line: usize,
    incident_id: Option<String>,
    source: Option<String>,
    note_a: String,
    note_b: String,
    age: Option<String>,
    sex: Option<String>,
    race: Option<String>,
    labels: Vec<(String, Option<Label>, String)>,
}

struct Collector {
    incidents: Vec<Incident>,
    first_line: HashMap<String, usize>,
    rejected: Vec<RecordError>,
}

impl Collector {
    fn new() -> Self {
        Collector {
            incidents: Vec::new(),
            first_line: HashMap::new(),
            rejected: Vec::new(),
        }
    }

    fn push(&mut self, raw: RawRecord) -> Result<()> {
        let line = raw.line;
        let id = match raw.incident_id.map(|s| s.trim().to_string()) {
            Some(id) if !id.is_empty() => id,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "missing incident_id".into(),
                })
            }
        };
        if let Some(&first_line) = self.first_line.get(&id) {
            return Err(Error::DuplicateId {
                id,
                line,
                first_line,
            });
        }
        self.first_line.insert(id.clone(), line);
        let source = match raw.source.map(|s| s.trim().to_string()) {
            Some(s) if !s.is_empty() => s,
            _ => return Err(Error::MissingSource { line }),
        };

        let mut problems = Vec::new();
        if raw.note_a.trim().is_empty() && raw.note_b.trim().is_empty() {
            problems.push("both notes are empty".to_string());
        }
        let mut labels = BTreeMap::new();
        for (var, parsed, token) in raw.labels {
            match parsed {
                Some(l) => {
                    labels.insert(var, l);
                }
                None => problems.push(format!("label {var:?} has invalid value {token}")),
            }
        }
        let age_years = match raw.age.as_deref().map(str::trim) {
            None | Some("") | Some("null") => None,
            Some(a) => match a.parse::<u32>() {
                Ok(v) => Some(v),
                Err(_) => {
                    problems.push(format!("age {a:?} is not a non-negative integer"));
                    None
                }
            },
        };
        let sex = match raw.sex.as_deref() {
            None => Sex::Unknown,
            Some(s) => Sex::parse(s).unwrap_or_else(|| {
                problems.push(format!("unknown sex {s:?}"));
                Sex::Unknown
            }),
        };
        let race = match raw.race.as_deref() {
            None => Race::Unknown,
            Some(r) => Race::parse(r).unwrap_or_else(|| {
                problems.push(format!("unknown race {r:?}"));
                Race::Unknown
            }),
        };

        if !problems.is_empty() {
            self.rejected.push(RecordError {
                line,
                incident_id: Some(id),
                message: problems.join("; "),
            });
            return Ok(());
        }
        self.incidents.push(Incident {
            incident_id: id,
            source,
            note_a: raw.note_a,
            note_b: raw.note_b,
            demographics: Demographics {
                age_years,
                sex,
                race,
            },
            labels,
        });
        Ok(())
    }

    fn finish(self) -> Result<Ingested> {
        Ok(Ingested {
            corpus: Corpus::new(self.incidents)?,
            rejected: self.rejected,
        })
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Ingested> {
    let mut collector = Collector::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let age = match rec.age {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => Some(v.to_string()),
        };
        collector.push(RawRecord {
            line: line_no,
            incident_id: rec.incident_id,
            source: rec.source,
            note_a: rec.note_a.unwrap_or_default(),
            note_b: rec.note_b.unwrap_or_default(),
            age,
            sex: rec.sex,
            race: rec.race,
            labels: rec
                .labels
                .into_iter()
                .map(|(k, v)| {
                    let parsed = Label::from_json(&v);
                    (k, parsed, v.to_string())
                })
                .collect(),
        })?;
    }
    collector.finish()
}

const CSV_FIXED: [&str; 7] = [
    "incident_id",
    "source",
    "note_a",
    "note_b",
    "age",
    "sex",
    "race",
];

/// CSV columns are mapped by header name; every column that is not one of
/// the fixed record fields is a label variable. Empty label cells are
/// treated as absent from the label map.
pub fn read_csv<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let fixed: Vec<Option<usize>> = CSV_FIXED.iter().map(|n| column(n)).collect();
    let label_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !CSV_FIXED.contains(&h.trim()))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut collector = Collector::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let line_no = i + 2;
        let row = row?;
        let cell = |idx: Option<usize>| idx.and_then(|c| row.get(c)).map(str::to_string);
        let labels = label_cols
            .iter()
            .filter_map(|(c, name)| {
                let token = row.get(*c).unwrap_or("").trim();
                if token.is_empty() {
                    None
                } else {
                    Some((name.clone(), Label::from_token(token), token.to_string()))
                }
            })
            .collect();
        collector.push(RawRecord {
            line: line_no,
            incident_id: cell(fixed[0]),
            source: cell(fixed[1]),
            note_a: cell(fixed[2]).unwrap_or_default(),
            note_b: cell(fixed[3]).unwrap_or_default(),
            age: cell(fixed[4]),
            sex: cell(fixed[5]).filter(|s| !s.trim().is_empty()),
            race: cell(fixed[6]).filter(|s| !s.trim().is_empty()),
            labels,
        })?;
    }
    collector.finish()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionEntry {
    pub source: String,
    pub variable: String,
    pub positives: usize,
    pub excluded: bool,
}

/// Drop sources with fewer than `min_positives` positive labels for
/// `variable`. The returned log lists every source in sorted order.
pub fn exclude_sparse_sources(
    corpus: &Corpus,
    variable: &str,
    min_positives: usize,
) -> Result<(Corpus, Vec<ExclusionEntry>)> {
    if !corpus.has_variable(variable) {
        return Err(Error::UnknownVariable(variable.to_string()));
    }
    let mut positives: BTreeMap<&str, usize> = BTreeMap::new();
    for inc in corpus.incidents() {
        let slot = positives.entry(inc.source.as_str()).or_default();
        if inc.label(variable) == Label::Present {
            *slot += 1;
        }
    }
    let log: Vec<ExclusionEntry> = positives
        .iter()
        .map(|(&source, &p)| ExclusionEntry {
            source: source.to_string(),
            variable: variable.to_string(),
            positives: p,
            excluded: p < min_positives,
        })
        .collect();
    let kept: HashSet<&str> = log
        .iter()
        .filter(|e| !e.excluded)
        .map(|e| e.source.as_str())
        .collect();
    let incidents = corpus
        .incidents()
        .iter()
        .filter(|i| kept.contains(i.source.as_str()))
        .cloned()
        .collect();
    Ok((Corpus::new(incidents)?, log))
}

/// One labeled instance of a view.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewItem {
    pub incident_id: String,
    pub source: String,
    pub label: bool,
}

/// An ordered selection of incidents with known labels for one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetView {
    pub variable: String,
    pub items: Vec<ViewItem>,
}

impl DatasetView {
    /// All incidents with a known label for `variable`, in corpus order.
    pub fn from_corpus(corpus: &Corpus, variable: &str) -> Self {
        let items = corpus
            .incidents()
            .iter()
            .filter_map(|inc| {
                inc.label(variable).known().map(|label| ViewItem {
                    incident_id: inc.incident_id.clone(),
                    source: inc.source.clone(),
                    label,
                })
            })
            .collect();
        DatasetView {
            variable: variable.to_string(),
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.label).count()
    }

    pub fn of_source(&self, source: &str) -> Vec<ViewItem> {
        self.items
            .iter()
            .filter(|i| i.source == source)
            .cloned()
            .collect()
    }

    pub fn excluding_source(&self, source: &str) -> Vec<ViewItem> {
        self.items
            .iter()
            .filter(|i| i.source != source)
            .cloned()
            .collect()
    }
}

pub fn ids(items: &[ViewItem]) -> Vec<String> {
    items.iter().map(|i| i.incident_id.clone()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceEntry {
    pub source: String,
    pub positives: usize,
    pub negatives: usize,
    pub kept_negatives: usize,
    pub unbalanced: bool,
}

#[derive(Clone, Debug)]
pub struct BalancedView {
    pub view: DatasetView,
    pub log: Vec<BalanceEntry>,
}

/// Per source, keep every positive and down-sample negatives without
/// replacement to the positive count.
///
/// A source with more positives than negatives is an error unless
/// `allow_unbalanced` is set, in which case it is kept as is and flagged.
pub fn balance(
    corpus: &Corpus,
    variable: &str,
    seed: u64,
    allow_unbalanced: bool,
) -> Result<BalancedView> {
    if !corpus.has_variable(variable) {
        return Err(Error::UnknownVariable(variable.to_string()));
    }
    let all = DatasetView::from_corpus(corpus, variable);
    let mut by_source: BTreeMap<&str, Vec<&ViewItem>> = BTreeMap::new();
    for item in &all.items {
        by_source.entry(item.source.as_str()).or_default().push(item);
    }

    let mut items = Vec::with_capacity(all.len());
    let mut log = Vec::with_capacity(by_source.len());
    for (source, members) in by_source {
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..members.len()).partition(|&i| members[i].label);
        let unbalanced = pos.len() > neg.len();
        if unbalanced && !allow_unbalanced {
            return Err(Error::Insufficient(format!(
                "source {source:?} has {} positives but only {} negatives for {variable:?} \
                 (pass allow_unbalanced to keep it unbalanced)",
                pos.len(),
                neg.len()
            )));
        }
        let mut kept_neg: Vec<usize> = if unbalanced {
            neg.clone()
        } else {
            let mut rng = rng::derived_rng(seed, &format!("balance:{source}"), 0);
            rand::seq::index::sample(&mut rng, neg.len(), pos.len())
                .into_iter()
                .map(|k| neg[k])
                .collect()
        };
        kept_neg.sort_unstable();
        let mut keep: Vec<usize> = pos.iter().copied().chain(kept_neg.iter().copied()).collect();
        keep.sort_unstable();
        items.extend(keep.into_iter().map(|i| members[i].clone()));
        log.push(BalanceEntry {
            source: source.to_string(),
            positives: pos.len(),
            negatives: neg.len(),
            kept_negatives: kept_neg.len(),
            unbalanced,
        });
    }
    Ok(BalancedView {
        view: DatasetView {
            variable: variable.to_string(),
            items,
        },
        log,
    })
}

/// Exclusion followed by balancing, the standard preparation of a corpus
/// for one variable.
#[derive(Clone, Debug)]
pub struct PreparedView {
    pub view: DatasetView,
    pub exclusion_log: Vec<ExclusionEntry>,
    pub balance_log: Vec<BalanceEntry>,
}

pub fn prepare_view(
    corpus: &Corpus,
    variable: &str,
    seed: u64,
    min_positives: usize,
    allow_unbalanced: bool,
) -> Result<PreparedView> {
    let (kept, exclusion_log) = exclude_sparse_sources(corpus, variable, min_positives)?;
    let balanced = balance(&kept, variable, seed, allow_unbalanced)?;
    Ok(PreparedView {
        view: balanced.view,
        exclusion_log,
        balance_log: balanced.log,
    })
}

/// [`prepare_view`] plus a check that `target_source` survives exclusion.
pub fn prepare_target_view(
    corpus: &Corpus,
    variable: &str,
    target_source: &str,
    seed: u64,
    min_positives: usize,
    allow_unbalanced: bool,
) -> Result<PreparedView> {
    let prepared = prepare_view(corpus, variable, seed, min_positives, allow_unbalanced)?;
    match prepared.exclusion_log.iter().find(|e| e.source == target_source) {
        None => Err(Error::NotFound(format!("source {target_source:?} not in corpus"))),
        Some(e) if e.excluded => Err(Error::Insufficient(format!(
            "target source {target_source:?} has {} positives for {variable:?}, below the \
             minimum of {min_positives}",
            e.positives
        ))),
        Some(_) => Ok(prepared),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<ViewItem>,
    pub validation: Vec<ViewItem>,
    pub test: Vec<ViewItem>,
    pub ratio: (u32, u32, u32),
    pub seed: u64,
}

/// Part sizes for `n` instances: train gets floor(0.8 n); the rest is halved
/// with validation taking the odd leftover.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let rest = n - train;
    let validation = rest.div_ceil(2);
    (train, validation, rest - validation)
}

/// Stratified 8:1:1 split. Positives and negatives are allocated to each
/// part in proportion to their share, then shuffled independently.
pub fn split_8_1_1(view: &[ViewItem], seed: u64) -> Result<SplitPlan> {
    let n = view.len();
    if n < 10 {
        return Err(Error::Insufficient(format!(
            "an 8:1:1 split needs at least 10 instances, got {n}"
        )));
    }
    let (n_train, n_val, _) = split_sizes(n);
    let mut pos: Vec<usize> = (0..n).filter(|&i| view[i].label).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !view[i].label).collect();
    let p = pos.len();

    let alloc = |part: usize, pos_left: usize, total_left: usize| -> usize {
        let neg_left = total_left - pos_left;
        let ideal = (part as f64 * pos_left as f64 / total_left as f64).round() as usize;
        ideal.clamp(part.saturating_sub(neg_left), part.min(pos_left))
    };
    let p_train = alloc(n_train, p, n);
    let p_val = alloc(n_val, p - p_train, n - n_train);

    let mut rng = rng::derived_rng(seed, "split-8-1-1", 0);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let take = |pos_range: std::ops::Range<usize>, neg_range: std::ops::Range<usize>| {
        let mut idx: Vec<usize> = pos[pos_range]
            .iter()
            .chain(neg[neg_range].iter())
            .copied()
            .collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| view[i].clone()).collect::<Vec<_>>()
    };
    let n_train_neg = n_train - p_train;
    let n_val_neg = n_val - p_val;
    let train = take(0..p_train, 0..n_train_neg);
    let validation = take(
        p_train..p_train + p_val,
        n_train_neg..n_train_neg + n_val_neg,
    );
    let test = take(p_train + p_val..p, n_train_neg + n_val_neg..neg.len());
    Ok(SplitPlan {
        train,
        validation,
        test,
        ratio: (8, 1, 1),
        seed,
    })
}

/// Draw `m` pairwise-disjoint uniform samples of size `x`.
pub fn sample_exclusive_subsets(
    view_other: &[ViewItem],
    x: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<ViewItem>>> {
    let need = m * x;
    if view_other.len() < need {
        return Err(Error::Insufficient(format!(
            "{m} exclusive subsets of size {x} need {need} instances from the other \
             sources but only {} are available (short by {})",
            view_other.len(),
            need - view_other.len()
        )));
    }
    let mut rng = rng::derived_rng(seed, "exclusive-subsets", 0);
    let picked = rand::seq::index::sample(&mut rng, view_other.len(), need).into_vec();
    Ok(picked
        .chunks(x.max(1))
        .take(m)
        .map(|chunk| {
            let mut c = chunk.to_vec();
            c.sort_unstable();
            c.into_iter().map(|i| view_other[i].clone()).collect()
        })
        .collect())
}

/// Target set, the pool of other sources and `m` exclusive subsets of the
/// pool, each as large as the target set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPartition {
    pub target_source: String,
    pub target_set: Vec<ViewItem>,
    pub other_pool: Vec<ViewItem>,
    pub exclusive_subsets: Vec<Vec<ViewItem>>,
}

impl CorpusPartition {
    pub fn build(view: &DatasetView, target_source: &str, m: usize, seed: u64) -> Result<Self> {
        let target_set = view.of_source(target_source);
        if target_set.is_empty() {
            return Err(Error::Insufficient(format!(
                "target source {target_source:?} has no instances in the view"
            )));
        }
        let other_pool = view.excluding_source(target_source);
        let exclusive_subsets = sample_exclusive_subsets(&other_pool, target_set.len(), m, seed)?;
        Ok(CorpusPartition {
            target_source: target_source.to_string(),
            target_set,
            other_pool,
            exclusive_subsets,
        })
    }

    pub fn x(&self) -> usize {
        self.target_set.len()
    }

    /// Other-pool instances in none of the exclusive subsets.
    pub fn remainder(&self) -> Vec<ViewItem> {
        let used: HashSet<&str> = self
            .exclusive_subsets
            .iter()
            .flatten()
            .map(|i| i.incident_id.as_str())
            .collect();
        self.other_pool
            .iter()
            .filter(|i| !used.contains(i.incident_id.as_str()))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn incident(id: &str, source: &str, label: Option<bool>) -> Incident {
        let mut labels = BTreeMap::new();
        labels.insert(
            "family".to_string(),
            label.map_or(Label::Unknown, Label::from_bool),
        );
        Incident {
            incident_id: id.to_string(),
            source: source.to_string(),
            note_a: format!("note {id}"),
            note_b: String::new(),
            demographics: Demographics::default(),
            labels,
        }
    }

    fn source_corpus(source: &str, pos: usize, neg: usize) -> Vec<Incident> {
        (0..pos)
            .map(|i| incident(&format!("{source}-p{i}"), source, Some(true)))
            .chain((0..neg).map(|i| incident(&format!("{source}-n{i}"), source, Some(false))))
            .collect()
    }

    fn items(pos: usize, neg: usize) -> Vec<ViewItem> {
        (0..pos + neg)
            .map(|i| ViewItem {
                incident_id: format!("i{i:04}"),
                source: "S".into(),
                label: i < pos,
            })
            .collect()
    }

    const GOOD: &str = r#"{"incident_id":"A1","source":"OH","note_a":"argued with wife","note_b":"","age":30,"sex":"male","race":"white","labels":{"family":1}}
{"incident_id":"A2","source":"OH","note_a":"","note_b":"history of depression","age":null,"sex":"female","race":"black","labels":{"family":0,"mental":"unknown"}}
{"incident_id":"A3","source":"CO","note_a":"x","note_b":"y","labels":{"family":0}}
"#;

    #[test]
    fn ingests_well_formed_jsonl() {
        let got = read_jsonl(GOOD.as_bytes()).unwrap();
        assert!(got.rejected.is_empty());
        assert_eq!(got.corpus.len(), 3);
        let a2 = got.corpus.get("A2").unwrap();
        assert_eq!(a2.demographics.sex, Sex::Female);
        assert_eq!(a2.demographics.age_years, None);
        assert_eq!(a2.label("mental"), Label::Unknown);
        assert_eq!(a2.label("family"), Label::Absent);
    }

    #[test]
    fn invalid_label_token_is_reported_with_line() {
        let text = format!(
            "{}{}",
            GOOD,
            r#"{"incident_id":"A4","source":"OH","note_a":"t","labels":{"family":"2"}}"#
        );
        let got = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(got.corpus.len(), 3);
        assert_eq!(got.rejected.len(), 1);
        assert_eq!(got.rejected[0].line, 4);
        assert!(got.rejected[0].message.contains("family"));
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let text = r#"{"incident_id":"X1","source":"OH","note_a":"a","labels":{}}
{"incident_id":"X1","source":"OH","note_a":"b","labels":{}}"#;
        match read_jsonl(text.as_bytes()) {
            Err(Error::DuplicateId {
                id,
                line,
                first_line,
            }) => {
                assert_eq!(id, "X1");
                assert_eq!((line, first_line), (2, 1));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn missing_source_is_fatal() {
        let text = r#"{"incident_id":"X1","note_a":"a","labels":{}}"#;
        assert!(matches!(
            read_jsonl(text.as_bytes()),
            Err(Error::MissingSource { line: 1 })
        ));
    }

    #[test]
    fn both_notes_empty_is_rejected() {
        let text = r#"{"incident_id":"X1","source":"OH","note_a":" ","note_b":"","labels":{}}"#;
        let got = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(got.corpus.len(), 0);
        assert_eq!(got.rejected.len(), 1);
    }

    #[test]
    fn csv_maps_columns_by_header() {
        let text = "source,incident_id,note_a,note_b,age,sex,race,family,mental\n\
                    OH,C1,argued,,45,male,white,1,0\n\
                    OH,C2,,alone,,female,black,0,unknown\n\
                    CO,C3,x,y,20,female,other,2,0\n";
        let got = read_csv(text.as_bytes()).unwrap();
        assert_eq!(got.corpus.len(), 2);
        assert_eq!(got.rejected.len(), 1);
        assert_eq!(got.rejected[0].line, 4);
        let c1 = got.corpus.get("C1").unwrap();
        assert_eq!(c1.label("family"), Label::Present);
        assert_eq!(c1.demographics.age_years, Some(45));
        assert_eq!(got.corpus.get("C2").unwrap().label("mental"), Label::Unknown);
    }

    #[test]
    fn jsonl_round_trip_preserves_records() {
        let got = read_jsonl(GOOD.as_bytes()).unwrap();
        let text = got.corpus.to_jsonl_string();
        let again = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(again.corpus.incidents(), got.corpus.incidents());
        assert_eq!(again.corpus.to_jsonl_string(), text);
    }

    #[test]
    fn sparse_source_boundary() {
        let mut incidents = source_corpus("AL", 4, 40);
        incidents.extend(source_corpus("OH", 470, 607));
        incidents.extend(source_corpus("ZZ", 10, 20));
        let corpus = Corpus::new(incidents).unwrap();
        let (kept, log) = exclude_sparse_sources(&corpus, "family", 10).unwrap();
        let excluded: Vec<_> = log.iter().filter(|e| e.excluded).map(|e| &e.source).collect();
        assert_eq!(excluded, vec!["AL"]);
        assert_eq!(kept.sources().into_iter().collect::<Vec<_>>(), vec!["OH", "ZZ"]);
        assert!(matches!(
            exclude_sparse_sources(&corpus, "nope", 10),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn balance_ohio_family_row() {
        let corpus = Corpus::new(source_corpus("OH", 470, 607)).unwrap();
        let b = balance(&corpus, "family", 3, false).unwrap();
        assert_eq!(b.view.len(), 940);
        assert_eq!(b.view.positives(), 470);
        assert_eq!(b.log[0].kept_negatives, 470);
    }

    #[test]
    fn balance_no_positives_gives_empty_source() {
        let mut incidents = source_corpus("A", 0, 50);
        incidents.extend(source_corpus("B", 5, 9));
        let corpus = Corpus::new(incidents).unwrap();
        let b = balance(&corpus, "family", 1, false).unwrap();
        assert!(b.view.of_source("A").is_empty());
        assert_eq!(b.view.of_source("B").len(), 10);
    }

    #[test]
    fn balance_is_seed_deterministic() {
        let corpus = Corpus::new(source_corpus("OH", 30, 200)).unwrap();
        let a = balance(&corpus, "family", 9, false).unwrap().view;
        let b = balance(&corpus, "family", 9, false).unwrap().view;
        let c = balance(&corpus, "family", 10, false).unwrap().view;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn balance_positive_excess_requires_flag() {
        let corpus = Corpus::new(source_corpus("OH", 20, 5)).unwrap();
        assert!(matches!(
            balance(&corpus, "family", 0, false),
            Err(Error::Insufficient(_))
        ));
        let b = balance(&corpus, "family", 0, true).unwrap();
        assert_eq!(b.view.len(), 25);
        assert!(b.log[0].unbalanced);
    }

    #[test]
    fn unknown_labels_never_enter_views() {
        let mut incidents = source_corpus("OH", 12, 12);
        incidents.push(incident("u1", "OH", None));
        let corpus = Corpus::new(incidents).unwrap();
        let v = DatasetView::from_corpus(&corpus, "family");
        assert_eq!(v.len(), 24);
        assert!(v.items.iter().all(|i| i.incident_id != "u1"));
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        assert_eq!(split_sizes(940), (752, 94, 94));
        assert_eq!(split_sizes(101), (80, 11, 10));
        assert_eq!(split_sizes(10), (8, 1, 1));
    }

    #[test]
    fn split_940_and_101() {
        let plan = split_8_1_1(&items(470, 470), 1).unwrap();
        assert_eq!(
            (plan.train.len(), plan.validation.len(), plan.test.len()),
            (752, 94, 94)
        );
        let plan = split_8_1_1(&items(51, 50), 1).unwrap();
        assert_eq!(
            (plan.train.len(), plan.validation.len(), plan.test.len()),
            (80, 11, 10)
        );
    }

    #[test]
    fn split_too_small() {
        assert!(split_8_1_1(&items(5, 4), 0).is_err());
    }

    #[test]
    fn split_stratification_toy_enumeration() {
        // 20 balanced instances: every seed must give 8/8, 1/1, 1/1.
        let view = items(10, 10);
        for seed in 0..200 {
            let plan = split_8_1_1(&view, seed).unwrap();
            for (part, size) in [(&plan.train, 16), (&plan.validation, 2), (&plan.test, 2)] {
                assert_eq!(part.len(), size);
                let pos = part.iter().filter(|i| i.label).count();
                let half = size as f64 / 2.0;
                assert!((pos as f64 - half).abs() <= 1.0, "seed {seed}");
            }
        }
    }

    #[test]
    fn exclusive_subsets_shortfall() {
        let pool = items(175, 175);
        let err = sample_exclusive_subsets(&pool, 100, 4, 0).unwrap_err();
        assert!(err.to_string().contains("short by 50"), "{err}");
    }

    #[test]
    fn exclusive_subsets_are_disjoint() {
        let pool = items(225, 225);
        let subsets = sample_exclusive_subsets(&pool, 100, 4, 5).unwrap();
        assert_eq!(subsets.len(), 4);
        let mut seen = HashSet::new();
        for s in &subsets {
            assert_eq!(s.len(), 100);
            for item in s {
                assert!(seen.insert(item.incident_id.clone()));
            }
        }
    }

    #[test]
    fn partition_keeps_target_out_of_subsets() {
        let mut incidents = source_corpus("T", 50, 50);
        for s in ["A", "B", "C", "D", "E"] {
            incidents.extend(source_corpus(s, 50, 50));
        }
        let corpus = Corpus::new(incidents).unwrap();
        let view = DatasetView::from_corpus(&corpus, "family");
        let part = CorpusPartition::build(&view, "T", 4, 11).unwrap();
        assert_eq!(part.x(), 100);
        for s in &part.exclusive_subsets {
            assert!(s.iter().all(|i| i.source != "T"));
        }
        assert_eq!(part.remainder().len(), 500 - 400);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions_the_view(pos in 5usize..80, neg in 5usize..80, seed in any::<u64>()) {
                let view = items(pos, neg);
                let plan = split_8_1_1(&view, seed).unwrap();
                let (t, v, s) = split_sizes(view.len());
                prop_assert_eq!((plan.train.len(), plan.validation.len(), plan.test.len()), (t, v, s));
                let mut all: Vec<_> = plan.train.iter().chain(&plan.validation).chain(&plan.test)
                    .map(|i| i.incident_id.clone()).collect();
                all.sort();
                let mut expected = ids(&view);
                expected.sort();
                prop_assert_eq!(all, expected);
            }

            #[test]
            fn balancing_keeps_every_positive(pos in 0usize..30, extra in 1usize..30, seed in any::<u64>()) {
                let corpus = Corpus::new(source_corpus("S", pos, pos + extra)).unwrap();
                let b = balance(&corpus, "family", seed, false).unwrap();
                prop_assert_eq!(b.view.positives(), pos);
                prop_assert_eq!(b.view.len(), 2 * pos);
            }
        }
    }
}

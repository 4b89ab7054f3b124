//! Review sessions for human adjudication of flagged instances.
//!
//! Each session lives in its own directory holding an append-only
//! `events.jsonl` log and a derived `snapshot.json`. Session state is a pure
//! fold over the log. Verdict writes use optimistic versioning per
//! (item, annotator): a submission must carry the latest stored version plus
//! one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::discovery::ErrorCountLedger;
use crate::error::{Error, Result};
use crate::metrics;
use crate::verification::{Correction, CorrectionVerdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pending,
    Keep,
    Flip,
    Uncertain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub incident_id: String,
    pub note_a: String,
    pub note_b: String,
    pub current_label: bool,
    pub error_count: u32,
    /// Hold-out probability from the last discovery repetition. Advisory.
    pub model_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub variable: String,
    pub target_source: String,
    pub annotator_ids: Vec<String>,
    pub items: Vec<ReviewItem>,
    pub created_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub session_id: String,
    pub incident_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    pub version: u32,
    pub recorded_at: DateTime<Utc>,
}

/// A verdict submission; `version` must be the latest stored version + 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub incident_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    pub version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created(SessionHeader),
    Adjudicated(Adjudication),
}

/// State derived from the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub header: SessionHeader,
    /// Latest adjudication per incident, then per annotator.
    pub latest: BTreeMap<String, BTreeMap<String, Adjudication>>,
    pub event_count: usize,
}

impl SessionState {
    pub fn replay(events: &[Event]) -> Result<Self> {
        let mut iter = events.iter();
        let header = match iter.next() {
            Some(Event::Created(h)) => h.clone(),
            _ => return Err(Error::Invalid("event log must start with a creation event".into())),
        };
        let mut state = SessionState {
            header,
            latest: BTreeMap::new(),
            event_count: 1,
        };
        for e in iter {
            match e {
                Event::Created(_) => {
                    return Err(Error::Invalid("duplicate creation event in log".into()))
                }
                Event::Adjudicated(a) => state.apply(a.clone())?,
            }
        }
        Ok(state)
    }

    fn apply(&mut self, a: Adjudication) -> Result<()> {
        let expected = self.latest_version(&a.incident_id, &a.annotator_id) + 1;
        if a.version != expected {
            return Err(Error::Conflict {
                latest: expected - 1,
            });
        }
        self.latest
            .entry(a.incident_id.clone())
            .or_default()
            .insert(a.annotator_id.clone(), a);
        self.event_count += 1;
        Ok(())
    }

    pub fn latest_version(&self, incident_id: &str, annotator_id: &str) -> u32 {
        self.latest
            .get(incident_id)
            .and_then(|m| m.get(annotator_id))
            .map_or(0, |a| a.version)
    }

    pub fn verdict(&self, incident_id: &str, annotator_id: &str) -> Verdict {
        self.latest
            .get(incident_id)
            .and_then(|m| m.get(annotator_id))
            .map_or(Verdict::Pending, |a| a.verdict)
    }

    fn check_submission(&self, s: &Submission) -> Result<()> {
        if !self.header.items.iter().any(|i| i.incident_id == s.incident_id) {
            return Err(Error::NotFound(format!(
                "incident {:?} is not in session {}",
                s.incident_id, self.header.session_id
            )));
        }
        if !self.header.annotator_ids.contains(&s.annotator_id) {
            return Err(Error::NotFound(format!(
                "annotator {:?} is not in session {}",
                s.annotator_id, self.header.session_id
            )));
        }
        if s.verdict == Verdict::Pending {
            return Err(Error::Invalid("pending is not a verdict".into()));
        }
        let latest = self.latest_version(&s.incident_id, &s.annotator_id);
        if s.version != latest + 1 {
            return Err(Error::Conflict { latest });
        }
        Ok(())
    }

    /// (item, annotator) pairs still pending.
    pub fn pending(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for item in &self.header.items {
            for a in &self.header.annotator_ids {
                if self.verdict(&item.incident_id, a) == Verdict::Pending {
                    out.push((item.incident_id.clone(), a.clone()));
                }
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.pending().is_empty()
    }

    pub fn item_views(&self, status: Option<Verdict>, annotator: Option<&str>) -> Vec<ItemView> {
        self.header
            .items
            .iter()
            .filter_map(|item| {
                let id = &item.incident_id;
                let view = match annotator {
                    Some(a) => {
                        let peers_done = self
                            .header
                            .annotator_ids
                            .iter()
                            .filter(|p| p.as_str() != a)
                            .all(|p| self.verdict(id, p) != Verdict::Pending);
                        ItemView {
                            item: item.clone(),
                            verdict: Some(self.verdict(id, a)),
                            version: self.latest_version(id, a),
                            peers_done,
                        }
                    }
                    None => ItemView {
                        item: item.clone(),
                        verdict: None,
                        version: 0,
                        peers_done: self
                            .header
                            .annotator_ids
                            .iter()
                            .all(|p| self.verdict(id, p) != Verdict::Pending),
                    },
                };
                let keep = match (status, annotator) {
                    (None, _) => true,
                    (Some(s), Some(a)) => self.verdict(id, a) == s,
                    (Some(s), None) => self
                        .header
                        .annotator_ids
                        .iter()
                        .any(|p| self.verdict(id, p) == s),
                };
                keep.then_some(view)
            })
            .collect()
    }

    pub fn iaa(&self) -> Result<IaaReport> {
        let ids = &self.header.annotator_ids;
        if ids.len() != 2 {
            return Err(Error::Invalid(
                "agreement needs a two-annotator session".into(),
            ));
        }
        self.require_complete()?;
        let mut table = [[0u64; 2]; 2];
        let mut uncertain = Vec::new();
        for item in &self.header.items {
            let id = &item.incident_id;
            let (va, vb) = (self.verdict(id, &ids[0]), self.verdict(id, &ids[1]));
            if va == Verdict::Uncertain || vb == Verdict::Uncertain {
                uncertain.push(id.clone());
                continue;
            }
            table[usize::from(va == Verdict::Keep)][usize::from(vb == Verdict::Keep)] += 1;
        }
        let compared: u64 = table.iter().flatten().sum();
        let kappa = if compared == 0 {
            None
        } else {
            Some(metrics::cohen_kappa_table(table)?)
        };
        Ok(IaaReport {
            session_id: self.header.session_id.clone(),
            kappa,
            compared,
            excluded_uncertain: uncertain,
            table,
        })
    }

    fn require_complete(&self) -> Result<()> {
        let pending = self.pending();
        if pending.is_empty() {
            return Ok(());
        }
        let listed: Vec<String> = pending
            .iter()
            .take(20)
            .map(|(i, a)| format!("{i}/{a}"))
            .collect();
        Err(Error::Invalid(format!(
            "session incomplete, {} pending verdicts: {}{}",
            pending.len(),
            listed.join(", "),
            if pending.len() > 20 { ", ..." } else { "" }
        )))
    }

    pub fn export(&self, resolution: Resolution) -> Result<ExportBundle> {
        self.require_complete()?;
        let ids = &self.header.annotator_ids;
        let mut corrections = Vec::new();
        let mut disagreements = Vec::new();
        let mut uncertain = Vec::new();
        for item in &self.header.items {
            let id = &item.incident_id;
            let verdicts: Vec<Verdict> = ids.iter().map(|a| self.verdict(id, a)).collect();
            if verdicts.contains(&Verdict::Uncertain) {
                uncertain.push(id.clone());
            }
            let agree = verdicts.windows(2).all(|w| w[0] == w[1]);
            if !agree {
                disagreements.push(Disagreement {
                    incident_id: id.clone(),
                    verdicts: ids.iter().cloned().zip(verdicts.iter().copied()).collect(),
                });
            }
            let flip = match resolution {
                Resolution::ConsensusOnly => agree && verdicts[0] == Verdict::Flip,
                Resolution::AnnotatorAPriority => verdicts[0] == Verdict::Flip,
            };
            if flip {
                let a = &self.latest[id][&ids[0]];
                corrections.push(Correction {
                    adjudication_id: format!(
                        "{}/{}/{}/v{}",
                        self.header.session_id, id, a.annotator_id, a.version
                    ),
                    incident_id: id.clone(),
                    verdict: CorrectionVerdict::Flip,
                });
            }
        }
        Ok(ExportBundle {
            session_id: self.header.session_id.clone(),
            variable: self.header.variable.clone(),
            target_source: self.header.target_source.clone(),
            export_version: self.event_count,
            resolution,
            corrections,
            disagreements,
            uncertain,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub item: ReviewItem,
    /// The requesting annotator's latest verdict.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    pub version: u32,
    /// Every other annotator has a non-pending verdict.
    pub peers_done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub session_id: String,
    /// `None` when every item has an uncertain verdict.
    pub kappa: Option<f64>,
    pub compared: u64,
    pub excluded_uncertain: Vec<String>,
    /// Rows: first annotator flip/keep; columns: second annotator.
    pub table: [[u64; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    ConsensusOnly,
    AnnotatorAPriority,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub incident_id: String,
    pub verdicts: BTreeMap<String, Verdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub session_id: String,
    pub variable: String,
    pub target_source: String,
    /// Number of log events covered.
    pub export_version: usize,
    pub resolution: Resolution,
    pub corrections: Vec<Correction>,
    pub disagreements: Vec<Disagreement>,
    pub uncertain: Vec<String>,
}

/// Session items from a discovery ledger, ordered by descending error count
/// then id.
pub fn session_items(ledger: &ErrorCountLedger, corpus: Option<&Corpus>) -> Result<Vec<ReviewItem>> {
    let mut items: Vec<ReviewItem> = ledger
        .flags
        .iter()
        .map(|id| {
            let (note_a, note_b) = match corpus {
                Some(c) => {
                    let inc = c
                        .get(id)
                        .ok_or_else(|| Error::NotFound(format!("flagged incident {id:?} not in corpus")))?;
                    (inc.note_a.clone(), inc.note_b.clone())
                }
                None => (String::new(), String::new()),
            };
            Ok(ReviewItem {
                incident_id: id.clone(),
                note_a,
                note_b,
                current_label: ledger.labels.get(id).copied().unwrap_or(false),
                error_count: ledger.counts.get(id).copied().unwrap_or(0),
                model_probability: ledger.model_probabilities.get(id).copied().unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<_>>()?;
    items.sort_by(|a, b| {
        b.error_count
            .cmp(&a.error_count)
            .then_with(|| a.incident_id.cmp(&b.incident_id))
    });
    Ok(items)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewSession {
    pub ledger: ErrorCountLedger,
    pub annotator_ids: Vec<String>,
}

struct SessionHandle {
    dir: PathBuf,
    state: Mutex<SessionState>,
}

/// Directory-backed store of review sessions.
pub struct ReviewStore {
    root: PathBuf,
    corpus: Option<Arc<Corpus>>,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
}

fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(events)
}

fn append_event(dir: &Path, event: &Event) -> Result<()> {
    let path = dir.join("events.jsonl");
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let mut line = serde_json::to_string(event)?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
    f.sync_data().map_err(|e| Error::io(&path, e))
}

fn write_snapshot(dir: &Path, state: &SessionState) -> Result<()> {
    let path = dir.join("snapshot.json");
    let tmp = dir.join("snapshot.json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(state)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

impl ReviewStore {
    /// Open (or create) a store, replaying every session log under `root`.
    pub fn open(root: &Path, corpus: Option<Arc<Corpus>>) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut sessions = BTreeMap::new();
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        for entry in entries {
            let dir = entry.map_err(|e| Error::io(root, e))?.path();
            let log = dir.join("events.jsonl");
            if !log.is_file() {
                continue;
            }
            let state = SessionState::replay(&read_events(&log)?)?;
            sessions.insert(
                state.header.session_id.clone(),
                Arc::new(SessionHandle {
                    dir,
                    state: Mutex::new(state),
                }),
            );
        }
        Ok(ReviewStore {
            root: root.to_path_buf(),
            corpus,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn handle(&self, session_id: &str) -> Result<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {session_id:?}")))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().expect("session map lock").keys().cloned().collect()
    }

    pub fn create_session(&self, ledger: &ErrorCountLedger, annotator_ids: &[String]) -> Result<SessionHeader> {
        if ledger.flags.is_empty() {
            return Err(Error::Invalid("the ledger has no flags".into()));
        }
        if annotator_ids.is_empty() || annotator_ids.len() > 2 {
            return Err(Error::Invalid(format!(
                "sessions take one or two annotators, got {}",
                annotator_ids.len()
            )));
        }
        let unique: BTreeSet<&String> = annotator_ids.iter().collect();
        if unique.len() != annotator_ids.len() {
            return Err(Error::Invalid("duplicate annotator ids".into()));
        }
        if annotator_ids.iter().any(|a| a.trim().is_empty()) {
            return Err(Error::Invalid("annotator ids must be non-empty".into()));
        }
        let items = session_items(ledger, self.corpus.as_deref())?;
        let mut sessions = self.sessions.write().expect("session map lock");
        let prefix = format!("{}-{}", ledger.target_source, ledger.variable);
        let n = (1..)
            .find(|n| !sessions.contains_key(&format!("{prefix}-{n:04}")))
            .expect("unbounded range");
        let session_id = format!("{prefix}-{n:04}");
        let header = SessionHeader {
            session_id: session_id.clone(),
            variable: ledger.variable.clone(),
            target_source: ledger.target_source.clone(),
            annotator_ids: annotator_ids.to_vec(),
            items,
            created_at: Utc::now(),
        };
        let dir = self.root.join(&session_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let event = Event::Created(header.clone());
        append_event(&dir, &event)?;
        let state = SessionState::replay(&[event])?;
        write_snapshot(&dir, &state)?;
        sessions.insert(
            session_id,
            Arc::new(SessionHandle {
                dir,
                state: Mutex::new(state),
            }),
        );
        Ok(header)
    }

    pub fn snapshot(&self, session_id: &str) -> Result<SessionState> {
        Ok(self.handle(session_id)?.state.lock().expect("session lock").clone())
    }

    pub fn submit(&self, session_id: &str, submission: Submission) -> Result<Adjudication> {
        let handle = self.handle(session_id)?;
        let mut state = handle.state.lock().expect("session lock");
        state.check_submission(&submission)?;
        let adj = Adjudication {
            session_id: session_id.to_string(),
            incident_id: submission.incident_id,
            annotator_id: submission.annotator_id,
            verdict: submission.verdict,
            note: submission.note,
            version: submission.version,
            recorded_at: Utc::now(),
        };
        append_event(&handle.dir, &Event::Adjudicated(adj.clone()))?;
        state.apply(adj.clone())?;
        write_snapshot(&handle.dir, &state)?;
        Ok(adj)
    }

    pub fn iaa(&self, session_id: &str) -> Result<IaaReport> {
        self.snapshot(session_id)?.iaa()
    }

    /// Export and persist; an export of an unchanged session is written
    /// once and re-read byte-identically.
    pub fn export(&self, session_id: &str, resolution: Resolution) -> Result<(ExportBundle, PathBuf)> {
        let handle = self.handle(session_id)?;
        let bundle = handle.state.lock().expect("session lock").export(resolution)?;
        let tag = serde_json::to_value(resolution)?;
        let path = handle.dir.join(format!(
            "export-v{:05}-{}.json",
            bundle.export_version,
            tag.as_str().unwrap_or("export")
        ));
        if !path.exists() {
            let mut bytes = serde_json::to_vec_pretty(&bundle)?;
            bytes.push(b'\n');
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok((bundle, path))
    }

    /// Replay the session's log from disk.
    pub fn replay_from_disk(&self, session_id: &str) -> Result<SessionState> {
        let handle = self.handle(session_id)?;
        SessionState::replay(&read_events(&handle.dir.join("events.jsonl"))?)
    }
}

//! Expert review of crosswalk candidates.
//!
//! Candidates are materialized from the mapping graphs of a [`Store`].
//! Decisions go to an append-only JSON-lines log that is replayed on open;
//! the latest decision per candidate sets its status. Assessments are
//! cached in a second JSON-lines file so they survive restarts.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::ChatProvider;
use crate::reasoner::{self, Assessment, LabeledCode, MappingLevel, PairInput, ReasonerError, StrategyConfig};
use crate::store::{self, Quad, Store, StoreError, Term};
use crate::vocab;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("decision log {path}, line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReviewError + '_ {
    move |source| ReviewError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
}

impl std::str::FromStr for Status {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Status::Pending),
            "accepted" => Ok(Status::Accepted),
            "rejected" => Ok(Status::Rejected),
            other => Err(ReviewError::InvalidInput(format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Reject,
    Reset,
}

impl Action {
    pub fn target(self) -> Status {
        match self {
            Action::Accept => Status::Accepted,
            Action::Reject => Status::Rejected,
            Action::Reset => Status::Pending,
        }
    }
}

impl std::str::FromStr for Action {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(Action::Accept),
            "reject" => Ok(Action::Reject),
            "reset" => Ok(Action::Reset),
            other => Err(ReviewError::InvalidInput(format!("unknown action {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRef {
    pub code: String,
    pub label: Option<String>,
    pub scheme: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemFlags {
    pub approximate: bool,
    pub no_map: bool,
    pub combination: bool,
    pub scenario: u8,
    pub choice_list: u8,
}

impl GemFlags {
    /// The five-character flag string used in crosswalk files.
    pub fn as_string(&self) -> String {
        format!(
            "{}{}{}{}{}",
            self.approximate as u8, self.no_map as u8, self.combination as u8, self.scenario, self.choice_list
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingCandidate {
    pub id: String,
    pub source: CodeRef,
    pub target: CodeRef,
    pub flags: GemFlags,
    pub assessment: Option<Assessment>,
    pub status: Status,
    /// IRI of the mapping node in the crosswalk graph.
    pub node: String,
}

impl MappingCandidate {
    pub fn level(&self) -> Option<MappingLevel> {
        self.assessment.as_ref().map(|a| a.level)
    }

    /// Reasoner input for this candidate, or `None` when a label is missing
    /// (for example no-map placeholder targets).
    pub fn pair_input(&self) -> Option<PairInput> {
        Some(PairInput {
            queried: LabeledCode::with_code(self.source.label.clone()?, &self.source.code),
            retrieved: LabeledCode::with_code(self.target.label.clone()?, &self.target.code),
            context: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub candidate_id: String,
    pub action: Action,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub via_bulk: bool,
}

/// Stable id: first 16 hex digits of the sha256 of the pipe-joined
/// `source scheme|source code|target scheme|target code|flags`.
pub fn candidate_id(source_scheme: &str, source: &str, target_scheme: &str, target: &str, flags: &str) -> String {
    let digest = Sha256::digest(format!("{source_scheme}|{source}|{target_scheme}|{target}|{flags}").as_bytes());
    hex::encode(&digest[..8])
}

/// Latest status for every candidate that has at least one decision.
pub fn replay(decisions: &[Decision]) -> BTreeMap<String, Status> {
    decisions
        .iter()
        .map(|d| (d.candidate_id.clone(), d.action.target()))
        .collect()
}

struct Materialized {
    candidate: MappingCandidate,
    quads: Vec<Quad>,
    src_scheme: String,
    dst_scheme: String,
}

fn label_of(store: &Store, concept: &Term) -> Option<String> {
    let mut labels: Vec<String> = store
        .quads_matching(Some(concept), Some(vocab::P_LABEL), None, None)
        .into_iter()
        .map(|q| q.object.string_value().to_string())
        .collect();
    labels.sort();
    labels.into_iter().next()
}

fn materialize(store: &Store) -> Vec<Materialized> {
    let mut out = Vec::new();
    for graph in store.graphs() {
        let Some((src_scheme, dst_scheme)) = vocab::parse_mapping_graph(&graph) else {
            continue;
        };
        let mut by_node: BTreeMap<Term, Vec<Quad>> = BTreeMap::new();
        for q in store.quads_matching(None, None, None, Some(&graph)) {
            by_node.entry(q.subject.clone()).or_default().push(q);
        }
        for (node, mut quads) in by_node {
            quads.sort();
            let object = |p: &str| quads.iter().find(|q| q.predicate == p).map(|q| &q.object);
            let (Some(source), Some(target)) = (object(vocab::P_MAP_SOURCE), object(vocab::P_MAP_TARGET)) else {
                log::warn!("mapping node {node} lacks a source or target; skipped");
                continue;
            };
            let code = |t: &Term| {
                t.as_iri()
                    .and_then(vocab::parse_concept)
                    .map(|(_, c)| c.to_string())
                    .unwrap_or_else(|| t.string_value().to_string())
            };
            let flag = |p: &str| object(p).is_some_and(|t| t.string_value() == "true");
            let digit = |p: &str| object(p).and_then(|t| t.string_value().parse().ok()).unwrap_or(0);
            let flags = GemFlags {
                approximate: flag(vocab::P_APPROXIMATE),
                no_map: flag(vocab::P_NO_MAP),
                combination: flag(vocab::P_COMBINATION),
                scenario: digit(vocab::P_SCENARIO),
                choice_list: digit(vocab::P_CHOICE_LIST),
            };
            let (source_code, target_code) = (code(source), code(target));
            let candidate = MappingCandidate {
                id: candidate_id(src_scheme, &source_code, dst_scheme, &target_code, &flags.as_string()),
                source: CodeRef {
                    label: label_of(store, source),
                    code: source_code,
                    scheme: src_scheme.to_string(),
                },
                target: CodeRef {
                    label: label_of(store, target),
                    code: target_code,
                    scheme: dst_scheme.to_string(),
                },
                flags,
                assessment: None,
                status: Status::Pending,
                node: node.string_value().to_string(),
            };
            out.push(Materialized {
                candidate,
                quads,
                src_scheme: src_scheme.to_string(),
                dst_scheme: dst_scheme.to_string(),
            });
        }
    }
    out.sort_by(|a, b| a.candidate.id.cmp(&b.candidate.id));
    out.dedup_by(|a, b| a.candidate.id == b.candidate.id);
    out
}

/// Reads a JSON-lines file, cutting off a trailing line that lacks its
/// newline (an interrupted append). Complete lines that fail to parse are
/// reported as corruption.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ReviewError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        log::warn!(
            "{}: dropping {} bytes of partial trailing line",
            path.display(),
            bytes.len() - complete
        );
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
        f.sync_all().map_err(io_err(path))?;
    }
    let mut out = Vec::new();
    for (i, line) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.push(serde_json::from_slice(line).map_err(|e| ReviewError::CorruptLog {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Append-only JSON-lines file; every append is flushed and fsynced.
struct JsonlFile {
    path: PathBuf,
    file: File,
}

impl JsonlFile {
    fn open(path: &Path) -> Result<Self, ReviewError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(JsonlFile {
            path: path.to_path_buf(),
            file,
        })
    }

    fn append<T: Serialize>(&mut self, items: &[T]) -> Result<(), ReviewError> {
        if items.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(&mut buf, item).expect("record serializes");
            buf.push(b'\n');
        }
        self.file.write_all(&buf).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CachedAssessment {
    candidate_id: String,
    assessment: Assessment,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFilter {
    pub level: Option<MappingLevel>,
    pub status: Option<Status>,
}

impl CandidateFilter {
    fn matches(&self, c: &MappingCandidate) -> bool {
        self.level.is_none_or(|l| c.level() == Some(l)) && self.status.is_none_or(|s| c.status == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<MappingCandidate>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    #[serde(rename = "A")]
    pub a: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub unassessed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    /// Decisions in the log, including earlier sessions.
    pub decisions_total: usize,
    pub decisions_this_session: usize,
    pub session_seconds: f64,
    pub per_minute: f64,
    pub last_decision_at: Option<DateTime<Utc>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub total: usize,
    pub by_status: StatusCounts,
    pub by_level: LevelCounts,
    pub throughput: Throughput,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssessRun {
    pub assessed: usize,
    /// Candidates without both labels, which cannot be graded.
    pub skipped: usize,
    pub failures: Vec<reasoner::PairFailure>,
}

struct State {
    candidates: Vec<MappingCandidate>,
    index: HashMap<String, usize>,
    /// `(refined graph, mapping node quads)` per candidate, same order.
    exports: Vec<(String, Vec<Quad>)>,
    log: JsonlFile,
    decisions_total: usize,
    decisions_this_session: usize,
    last_decision_at: Option<DateTime<Utc>>,
}

/// Candidates plus their durable decision history.
///
/// Reads share a lock; every decision, single or bulk, runs under one
/// exclusive lock covering both the log append and the status update.
pub struct ReviewModel {
    state: RwLock<State>,
    cache: Option<Mutex<JsonlFile>>,
    started: Instant,
}

impl ReviewModel {
    /// Materializes candidates from `store`, replays the decision log and
    /// attaches cached assessments.
    pub fn open(store: &Store, log_path: &Path, cache_path: Option<&Path>) -> Result<Self, ReviewError> {
        let materialized = materialize(store);
        let decisions: Vec<Decision> = read_jsonl(log_path)?;
        let log = JsonlFile::open(log_path)?;
        let mut candidates = Vec::with_capacity(materialized.len());
        let mut exports = Vec::with_capacity(materialized.len());
        for m in materialized {
            exports.push((vocab::refined_graph(&m.src_scheme, &m.dst_scheme), m.quads));
            candidates.push(m.candidate);
        }
        let index: HashMap<String, usize> = candidates.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();

        for (id, status) in replay(&decisions) {
            match index.get(&id) {
                Some(i) => candidates[*i].status = status,
                None => log::warn!("decision log refers to unknown candidate {id}"),
            }
        }
        let cache = match cache_path {
            Some(path) => {
                for entry in read_jsonl::<CachedAssessment>(path)? {
                    if let Some(i) = index.get(&entry.candidate_id) {
                        candidates[*i].assessment = Some(entry.assessment);
                    }
                }
                Some(Mutex::new(JsonlFile::open(path)?))
            }
            None => None,
        };
        Ok(ReviewModel {
            state: RwLock::new(State {
                candidates,
                index,
                exports,
                log,
                decisions_total: decisions.len(),
                decisions_this_session: 0,
                last_decision_at: decisions.last().map(|d| d.timestamp),
            }),
            cache,
            started: Instant::now(),
        })
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn len(&self) -> usize {
        self.read().candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<MappingCandidate> {
        let state = self.read();
        state.index.get(id).map(|i| state.candidates[*i].clone())
    }

    /// All candidates matching `filter`, ordered by id.
    pub fn candidates(&self, filter: &CandidateFilter) -> Vec<MappingCandidate> {
        self.read()
            .candidates
            .iter()
            .filter(|c| filter.matches(c))
            .cloned()
            .collect()
    }

    /// One page (1-based) of the filtered, id-ordered candidate list.
    pub fn list(&self, filter: &CandidateFilter, page: usize, page_size: usize) -> Result<Page, ReviewError> {
        if page == 0 {
            return Err(ReviewError::InvalidInput("page starts at 1".into()));
        }
        if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
            return Err(ReviewError::InvalidInput(format!(
                "page_size must be between 1 and {MAX_PAGE_SIZE}"
            )));
        }
        let state = self.read();
        let matching: Vec<&MappingCandidate> = state.candidates.iter().filter(|c| filter.matches(c)).collect();
        let total = matching.len();
        Ok(Page {
            items: matching
                .into_iter()
                .skip((page - 1).saturating_mul(page_size))
                .take(page_size)
                .cloned()
                .collect(),
            page,
            page_size,
            total,
            pages: total.div_ceil(page_size),
        })
    }

    /// Status of every candidate, keyed by id.
    pub fn status_map(&self) -> BTreeMap<String, Status> {
        self.read()
            .candidates
            .iter()
            .map(|c| (c.id.clone(), c.status))
            .collect()
    }

    fn check_reviewer(reviewer: &str) -> Result<(), ReviewError> {
        if reviewer.trim().is_empty() {
            return Err(ReviewError::InvalidInput("reviewer must not be empty".into()));
        }
        Ok(())
    }

    fn record(state: &mut State, decisions: Vec<Decision>) -> Result<(), ReviewError> {
        state.log.append(&decisions)?;
        state.decisions_total += decisions.len();
        state.decisions_this_session += decisions.len();
        for d in decisions {
            state.last_decision_at = Some(d.timestamp);
            let i = state.index[&d.candidate_id];
            state.candidates[i].status = d.action.target();
        }
        Ok(())
    }

    /// Applies one decision. A decision that would leave the status
    /// unchanged is not logged, so repeating a call is harmless.
    pub fn decide(
        &self,
        id: &str,
        action: Action,
        reviewer: &str,
        note: Option<String>,
    ) -> Result<MappingCandidate, ReviewError> {
        Self::check_reviewer(reviewer)?;
        let mut state = self.write();
        let i = *state
            .index
            .get(id)
            .ok_or_else(|| ReviewError::UnknownCandidate(id.to_string()))?;
        if state.candidates[i].status != action.target() {
            let decision = Decision {
                candidate_id: id.to_string(),
                action,
                reviewer: reviewer.to_string(),
                timestamp: Utc::now(),
                note,
                via_bulk: false,
            };
            Self::record(&mut state, vec![decision])?;
        }
        Ok(state.candidates[i].clone())
    }

    /// Applies `action` to every pending candidate assessed at `level`.
    /// Each one gets its own logged decision; the batch is written with a
    /// single append while holding the writer lock.
    pub fn bulk_decide(
        &self,
        level: MappingLevel,
        action: Action,
        reviewer: &str,
        note: Option<String>,
    ) -> Result<usize, ReviewError> {
        Self::check_reviewer(reviewer)?;
        let mut state = self.write();
        let now = Utc::now();
        let decisions: Vec<Decision> = state
            .candidates
            .iter()
            .filter(|c| c.status == Status::Pending && c.level() == Some(level) && action.target() != Status::Pending)
            .map(|c| Decision {
                candidate_id: c.id.clone(),
                action,
                reviewer: reviewer.to_string(),
                timestamp: now,
                note: note.clone(),
                via_bulk: true,
            })
            .collect();
        let affected = decisions.len();
        Self::record(&mut state, decisions)?;
        Ok(affected)
    }

    pub fn stats(&self) -> ReviewStats {
        let state = self.read();
        let mut by_status = StatusCounts::default();
        let mut by_level = LevelCounts::default();
        for c in &state.candidates {
            match c.status {
                Status::Pending => by_status.pending += 1,
                Status::Accepted => by_status.accepted += 1,
                Status::Rejected => by_status.rejected += 1,
            }
            match c.level() {
                Some(MappingLevel::A) => by_level.a += 1,
                Some(MappingLevel::B) => by_level.b += 1,
                Some(MappingLevel::C) => by_level.c += 1,
                None => by_level.unassessed += 1,
            }
        }
        let secs = self.started.elapsed().as_secs_f64();
        ReviewStats {
            total: state.candidates.len(),
            by_status,
            by_level,
            throughput: Throughput {
                decisions_total: state.decisions_total,
                decisions_this_session: state.decisions_this_session,
                session_seconds: secs,
                per_minute: if secs > 0.0 {
                    state.decisions_this_session as f64 * 60.0 / secs
                } else {
                    0.0
                },
                last_decision_at: state.last_decision_at,
            },
        }
    }

    /// Sets assessments directly, for example from a precomputed file, and
    /// caches them. Unknown ids are rejected before anything changes.
    pub fn set_assessments(&self, items: Vec<(String, Assessment)>) -> Result<usize, ReviewError> {
        {
            let state = self.read();
            if let Some((id, _)) = items.iter().find(|(id, _)| !state.index.contains_key(id)) {
                return Err(ReviewError::UnknownCandidate(id.clone()));
            }
        }
        let cached: Vec<CachedAssessment> = items
            .into_iter()
            .map(|(candidate_id, assessment)| CachedAssessment {
                candidate_id,
                assessment,
            })
            .collect();
        if let Some(cache) = &self.cache {
            cache.lock().unwrap_or_else(|e| e.into_inner()).append(&cached)?;
        }
        let mut state = self.write();
        for c in &cached {
            let i = state.index[&c.candidate_id];
            state.candidates[i].assessment = Some(c.assessment.clone());
        }
        Ok(cached.len())
    }

    /// Grades every candidate that has no assessment yet. The provider runs
    /// without holding the lock, so listings stay responsive.
    pub fn assess_missing(
        &self,
        strategy: &StrategyConfig,
        provider: &dyn ChatProvider,
        workers: usize,
    ) -> Result<AssessRun, ReviewError> {
        let mut run = AssessRun::default();
        let mut ids = Vec::new();
        let mut pairs = Vec::new();
        for c in self.read().candidates.iter().filter(|c| c.assessment.is_none()) {
            match c.pair_input() {
                Some(p) => {
                    ids.push(c.id.clone());
                    pairs.push(p);
                }
                None => run.skipped += 1,
            }
        }
        if pairs.is_empty() {
            return Ok(run);
        }
        let outcome = reasoner::assess_pairs(&pairs, strategy, provider, workers)?;
        run.failures = outcome.failures();
        let done: Vec<(String, Assessment)> = outcome
            .assessments
            .into_iter()
            .map(|(i, a)| (ids[i].clone(), a))
            .collect();
        run.assessed = self.set_assessments(done)?;
        Ok(run)
    }

    /// Writes the mapping nodes of accepted candidates, moved into the
    /// refined graph, as sorted N-Quads. Returns the statement count.
    pub fn export_refined(&self, path: &Path) -> Result<usize, ReviewError> {
        let quads = self.refined_quads();
        Ok(store::export_quads(path, &quads)?)
    }

    pub fn refined_quads(&self) -> Vec<Quad> {
        let state = self.read();
        let mut out: Vec<Quad> = state
            .candidates
            .iter()
            .zip(&state.exports)
            .filter(|(c, _)| c.status == Status::Accepted)
            .flat_map(|(_, (graph, quads))| {
                quads.iter().map(move |q| Quad {
                    graph: graph.clone(),
                    ..q.clone()
                })
            })
            .collect();
        out.sort();
        out
    }

    /// Every decision in the log, oldest first.
    pub fn decisions(&self) -> Result<Vec<Decision>, ReviewError> {
        let state = self.read();
        read_jsonl(&state.log.path)
    }
}

//! Session lifecycle on top of the engine: creation, turns, report review.
//!
//! Writers to one session are serialized by a per-session mutex. Readers never
//! wait on a running turn; they see the last committed snapshot.

use crate::config::{ConfigError, EngineFactory};
use crate::store::{FileStore, StoreError, TurnLogEntry};
use chrono::{DateTime, Utc};
use interview_core::engine::{EngineError, TerminationDecision};
use interview_core::prompts::AbductionRecord;
use interview_core::questionnaire::{FieldIssue, Questionnaire};
use interview_core::report::{render_report_markdown, ReportError, ShareSelection, SharedReport, SummarySource};
use interview_core::slots::SlotOrigin;
use interview_core::transcript::grapheme_len;
use interview_core::{build_report, DialogueState, Engine, EngineConfig, MethodId, Phase, Report, TurnTrace, Utterance};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

/// Longest accepted user utterance, in grapheme clusters.
pub const MAX_INPUT_GRAPHEMES: usize = 2000;

/// Opaque session token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SessionId(uuid::Uuid);

impl SessionId {
    pub fn new() -> Self {
        Self(uuid::Uuid::new_v4())
    }
}

impl Default for SessionId {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.simple())
    }
}

impl From<SessionId> for String {
    fn from(id: SessionId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for SessionId {
    type Error = uuid::Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for SessionId {
    type Err = uuid::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        uuid::Uuid::parse_str(s).map(Self)
    }
}

/// Everything persisted for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: SessionId,
    pub state: DialogueState,
    /// Built once the interview ends; every entry starts out shared.
    pub report: Option<Report>,
    /// Opt-outs and opt-ins recorded by the nurse, applied over `report`.
    #[serde(default)]
    pub selection: ShareSelection,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no session with id `{0}`")]
    UnknownSession(String),
    #[error("session is in phase {0} and accepts no more input")]
    PhaseClosed(Phase),
    #[error("operation requires phase {expected} or later, session is in {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("no report entry named `{0}`")]
    UnknownEntry(String),
    #[error("utterance has {graphemes} characters, the limit is {limit}")]
    InputTooLong { graphemes: usize, limit: usize },
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("request failed validation")]
    Validation(Vec<FieldIssue>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::PhaseClosed(_) => "phase_closed",
            ServiceError::WrongPhase { .. } => "wrong_phase",
            ServiceError::UnknownEntry(_) => "unknown_entry",
            ServiceError::InputTooLong { .. } => "input_too_long",
            ServiceError::EmptyUtterance => "empty_utterance",
            ServiceError::Validation(_) => "validation_failed",
            ServiceError::Config(_) => "backend_unavailable",
            ServiceError::Storage(_) => "storage_error",
        }
    }

    pub fn details(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            ServiceError::UnknownSession(id) => json!({ "session": id }),
            ServiceError::PhaseClosed(phase) => json!({ "phase": phase }),
            ServiceError::WrongPhase { expected, actual } => json!({ "expected": expected, "actual": actual }),
            ServiceError::UnknownEntry(name) => json!({ "entry": name }),
            ServiceError::InputTooLong { graphemes, limit } => json!({ "graphemes": graphemes, "limit": limit }),
            ServiceError::Validation(issues) => json!({ "issues": issues }),
            _ => serde_json::Value::Null,
        }
    }

    fn validation(path: &str, message: impl Into<String>) -> Self {
        ServiceError::Validation(vec![FieldIssue {
            path: path.to_owned(),
            message: message.into(),
        }])
    }
}

impl From<EngineError> for ServiceError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::PhaseClosed(phase) => ServiceError::PhaseClosed(phase),
            EngineError::EmptyUtterance => ServiceError::EmptyUtterance,
            EngineError::InvalidQuestionnaire(invalid) => ServiceError::Validation(
                invalid
                    .issues
                    .into_iter()
                    .map(|i| FieldIssue {
                        path: format!("questionnaire.{}", i.path),
                        message: i.message,
                    })
                    .collect(),
            ),
            EngineError::InvalidConfig(message) => ServiceError::validation("config", message),
            EngineError::WrongPhase { expected, actual } => ServiceError::WrongPhase { expected, actual },
        }
    }
}

impl From<ReportError> for ServiceError {
    fn from(err: ReportError) -> Self {
        match err {
            ReportError::WrongPhase(actual) => ServiceError::WrongPhase {
                expected: Phase::ReportReady,
                actual,
            },
            ReportError::UnknownEntry(name) => ServiceError::UnknownEntry(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub questionnaire: Questionnaire,
    #[serde(default)]
    pub method: Option<MethodId>,
    /// Replaces the service's engine defaults for this session.
    #[serde(default)]
    pub config: Option<EngineConfig>,
}

impl CreateSessionRequest {
    pub fn new(questionnaire: Questionnaire) -> Self {
        Self {
            questionnaire,
            method: None,
            config: None,
        }
    }

    /// Parses a request body, reporting the path of the first offending field.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ServiceError> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            ServiceError::validation(&path, e.into_inner().to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: SessionId,
    pub method: MethodId,
    pub phase: Phase,
    pub opening: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotView {
    pub name: String,
    pub categories: Vec<String>,
    pub value: Option<String>,
    pub filled: bool,
    pub origin: SlotOrigin,
    pub created_turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotsView {
    pub fill_rate: f64,
    pub filled: usize,
    pub total: usize,
    pub slots: Vec<SlotView>,
}

impl SlotsView {
    fn of(state: &DialogueState) -> Self {
        let slots = state.slots();
        Self {
            fill_rate: slots.fill_rate().unwrap_or(0.0),
            filled: slots.filled_count(),
            total: slots.len(),
            slots: slots
                .iter()
                .map(|s| SlotView {
                    name: s.name().to_owned(),
                    categories: s.categories().to_vec(),
                    value: s.value().map(str::to_owned),
                    filled: s.is_filled(),
                    origin: s.origin(),
                    created_turn: s.created_turn(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: SessionId,
    pub method: MethodId,
    pub phase: Phase,
    pub accepts_input: bool,
    pub turn_index: usize,
    pub transcript: Vec<Utterance>,
    pub slots: SlotsView,
    pub abduction_history: Vec<AbductionRecord>,
    pub termination: Option<TerminationDecision>,
    pub report_available: bool,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReply {
    pub session: SessionId,
    pub turn: usize,
    pub system_utterance: String,
    pub phase: Phase,
    pub terminal: bool,
    pub fill_rate: f64,
    pub filled: usize,
    pub total: usize,
    /// What happened inside the turn, without the rendered prompts.
    pub trace: TurnTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub session: SessionId,
    pub summary_source: SummarySource,
    /// Every entry, with its current share flag.
    pub report: Report,
    /// What a manager would see.
    pub shared: SharedReport,
    pub markdown: String,
}

impl ReportView {
    fn of(record: &SessionRecord, report: &Report) -> Result<Self, ServiceError> {
        let full = report.with_selection(&record.selection)?;
        let shared = full.shared_view();
        Ok(Self {
            session: record.id,
            summary_source: full.summary_source,
            markdown: render_report_markdown(&shared),
            shared,
            report: full,
        })
    }
}

struct LiveSession {
    /// Held for the whole of a mutating operation.
    writer: Mutex<Option<Engine>>,
    snapshot: RwLock<Arc<SessionRecord>>,
}

impl LiveSession {
    fn new(record: SessionRecord, engine: Option<Engine>) -> Self {
        Self {
            writer: Mutex::new(engine),
            snapshot: RwLock::new(Arc::new(record)),
        }
    }

    fn snapshot(&self) -> Arc<SessionRecord> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, record: SessionRecord) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(record);
    }
}

pub struct SessionService {
    store: FileStore,
    factory: EngineFactory,
    defaults: EngineConfig,
    live: Mutex<HashMap<SessionId, Arc<LiveSession>>>,
}

impl fmt::Debug for SessionService {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionService")
            .field("store", &self.store)
            .field("factory", &self.factory)
            .finish()
    }
}

impl SessionService {
    pub fn new(store: FileStore, factory: EngineFactory, defaults: EngineConfig) -> Self {
        Self {
            store,
            factory,
            defaults,
            live: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &FileStore {
        &self.store
    }

    fn parse_id(raw: &str) -> Result<SessionId, ServiceError> {
        raw.parse().map_err(|_| ServiceError::UnknownSession(raw.to_owned()))
    }

    /// The in-memory session, loading it from disk after a restart.
    fn session(&self, raw_id: &str) -> Result<Arc<LiveSession>, ServiceError> {
        let id = Self::parse_id(raw_id)?;
        let mut live = self.live.lock().expect("session map lock");
        if let Some(session) = live.get(&id) {
            return Ok(session.clone());
        }
        let record = self
            .store
            .load(&id)?
            .ok_or_else(|| ServiceError::UnknownSession(raw_id.to_owned()))?;
        self.store.trim_log(&id, record.state.turn_index())?;
        // Per-session backends (scripts) restart from their first entry.
        let engine = if self.factory.per_session() {
            Some(self.factory.engine()?)
        } else {
            None
        };
        let session = Arc::new(LiveSession::new(record, engine));
        live.insert(id, session.clone());
        Ok(session)
    }

    fn engine_for(&self, slot: &Option<Engine>) -> Result<Engine, ServiceError> {
        match slot {
            Some(engine) => Ok(engine.clone()),
            None => Ok(self.factory.engine()?),
        }
    }

    pub fn create_session(&self, request: CreateSessionRequest) -> Result<SessionCreated, ServiceError> {
        let engine = self.factory.engine()?;
        let method = request.method.unwrap_or(MethodId::Proposed2);
        let config = request.config.unwrap_or_else(|| self.defaults.clone());
        let (state, opening) = engine.start_session(config, request.questionnaire, method)?;
        let now = Utc::now();
        let record = SessionRecord {
            id: SessionId::new(),
            state,
            report: None,
            selection: ShareSelection::new(),
            created_at: now,
            updated_at: now,
        };
        self.store.save(&record)?;
        let created = SessionCreated {
            id: record.id,
            method,
            phase: record.state.phase(),
            opening,
        };
        let engine = self.factory.per_session().then_some(engine);
        self.live
            .lock()
            .expect("session map lock")
            .insert(record.id, Arc::new(LiveSession::new(record, engine)));
        tracing::info!(session = %created.id, method = %method, "session created");
        Ok(created)
    }

    /// Runs one engine turn and commits it before returning.
    pub fn post_utterance(&self, raw_id: &str, text: &str) -> Result<UtteranceReply, ServiceError> {
        let graphemes = grapheme_len(text);
        if graphemes > MAX_INPUT_GRAPHEMES {
            return Err(ServiceError::InputTooLong {
                graphemes,
                limit: MAX_INPUT_GRAPHEMES,
            });
        }
        let session = self.session(raw_id)?;
        let writer = session.writer.lock().expect("session writer lock");
        let engine = self.engine_for(&writer)?;
        let mut record = SessionRecord::clone(&session.snapshot());

        let mut outcome = engine.advance(&mut record.state, text)?;
        outcome.trace.prompts.clear();
        if outcome.terminal && record.report.is_none() {
            record.report = Some(build_report(&engine, &record.state)?);
        }
        record.updated_at = Utc::now();

        let entry = TurnLogEntry {
            turn: outcome.trace.turn,
            at: record.updated_at,
            user: outcome.trace.user_utterance.clone(),
            system: outcome.system_utterance.clone(),
            phase: outcome.phase,
            fill_rate: outcome.trace.fill_rate,
            admitted_slots: outcome.trace.admitted_drafts().to_vec(),
        };
        self.store.append_turn(&record.id, &entry)?;
        if let Err(e) = self.store.save(&record) {
            // Keep the log consistent with the snapshot that is still on disk.
            let committed = session.snapshot().state.turn_index();
            let _ = self.store.trim_log(&record.id, committed);
            return Err(e.into());
        }

        let slots = record.state.slots();
        let reply = UtteranceReply {
            session: record.id,
            turn: outcome.trace.turn,
            system_utterance: outcome.system_utterance,
            phase: outcome.phase,
            terminal: outcome.terminal,
            fill_rate: slots.fill_rate().unwrap_or(0.0),
            filled: slots.filled_count(),
            total: slots.len(),
            trace: outcome.trace,
        };
        session.publish(record);
        drop(writer);
        Ok(reply)
    }

    pub fn get_state(&self, raw_id: &str) -> Result<SessionView, ServiceError> {
        let record = self.session(raw_id)?.snapshot();
        let state = &record.state;
        Ok(SessionView {
            id: record.id,
            method: state.method().id(),
            phase: state.phase(),
            accepts_input: state.accepts_input(),
            turn_index: state.turn_index(),
            transcript: state.transcript().to_vec(),
            slots: SlotsView::of(state),
            abduction_history: state.abduction_history().to_vec(),
            termination: state.termination().cloned(),
            report_available: record.report.is_some(),
            created_at: record.created_at,
            updated_at: record.updated_at,
        })
    }

    pub fn get_slots(&self, raw_id: &str) -> Result<SlotsView, ServiceError> {
        Ok(SlotsView::of(&self.session(raw_id)?.snapshot().state))
    }

    fn require_report_phase(record: &SessionRecord) -> Result<(), ServiceError> {
        let actual = record.state.phase();
        if actual < Phase::ReportReady {
            return Err(ServiceError::WrongPhase {
                expected: Phase::ReportReady,
                actual,
            });
        }
        Ok(())
    }

    pub fn get_report(&self, raw_id: &str) -> Result<ReportView, ServiceError> {
        let session = self.session(raw_id)?;
        let record = session.snapshot();
        Self::require_report_phase(&record)?;
        if let Some(report) = &record.report {
            return ReportView::of(&record, report);
        }
        // Sessions stored before their report existed; build it once.
        let writer = session.writer.lock().expect("session writer lock");
        let mut record = SessionRecord::clone(&session.snapshot());
        if record.report.is_none() {
            let engine = self.engine_for(&writer)?;
            record.report = Some(build_report(&engine, &record.state)?);
            self.store.save(&record)?;
        }
        let view = ReportView::of(&record, record.report.as_ref().expect("report just built"));
        session.publish(record);
        view
    }

    /// Merges `selection` into the stored choices and returns the new preview.
    pub fn patch_share_selection(&self, raw_id: &str, selection: &ShareSelection) -> Result<ReportView, ServiceError> {
        let session = self.session(raw_id)?;
        Self::require_report_phase(&session.snapshot())?;
        // Make sure a report exists before taking the writer lock ourselves.
        self.get_report(raw_id)?;
        let _writer = session.writer.lock().expect("session writer lock");
        let mut record = SessionRecord::clone(&session.snapshot());
        let report = record.report.clone().expect("report present after get_report");
        let mut merged = record.selection.clone();
        merged.extend(selection.iter().map(|(k, v)| (k.clone(), *v)));
        // Validates every name before anything is stored.
        report.with_selection(&merged)?;
        record.selection = merged;
        record.updated_at = Utc::now();
        self.store.save(&record)?;
        let view = ReportView::of(&record, &report);
        session.publish(record);
        view
    }

    pub fn report_markdown(&self, raw_id: &str) -> Result<String, ServiceError> {
        Ok(self.get_report(raw_id)?.markdown)
    }

    pub fn turn_log(&self, raw_id: &str) -> Result<Vec<TurnLogEntry>, ServiceError> {
        let id = Self::parse_id(raw_id)?;
        self.session(raw_id)?;
        Ok(self.store.turn_log(&id)?)
    }

    pub fn list_sessions(&self) -> Result<Vec<SessionId>, ServiceError> {
        Ok(self.store.list()?)
    }
}

//! Session service behind the HTTP endpoints.
//!
//! Every operation that carries a `t_ms` logs exactly one interaction event,
//! feeds it to the session's trigger machine, and logs a `TipShown` event
//! (same `t_ms`) for each tip the machine emits. Those tips are returned
//! in-band as `new_tips`. Requests for one session are serialized; sessions
//! proceed independently.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{SearchTip, TipCatalog, TipKind};
use crate::config::{AssignmentMode, ServiceConfig};
use crate::event::{AnswerLabel, Condition, EventKind, InteractionEvent, QuerySource, SessionId};
use crate::search::{Document, Index, ScoredResult, SearchBackend};
use crate::store::{read_sessions, EventStore, ReadMode, StoreError};
use crate::tasks::TaskSet;
use crate::trigger::{SessionState, TriggerAction, TriggerError};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown document `{0}`")]
    UnknownDoc(String),
    #[error("session is finished")]
    SessionFinished,
    #[error("timestamp {got} ms is earlier than the last seen {last} ms")]
    OutOfOrderTimestamp { last: u64, got: u64 },
    #[error("tip `{0}` has not been shown in this session")]
    TipNotShown(TipKind),
    #[error("tip `{tip}` has no suggestion {index}")]
    InvalidSuggestion { tip: TipKind, index: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("startup failed: {0}")]
    Startup(String),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl ServiceError {
    /// Stable machine-readable code used in error responses.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownTopic(_) => "unknown_topic",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownDoc(_) => "unknown_doc",
            ServiceError::SessionFinished => "session_finished",
            ServiceError::OutOfOrderTimestamp { .. } => "out_of_order_timestamp",
            ServiceError::TipNotShown(_) => "tip_not_shown",
            ServiceError::InvalidSuggestion { .. } => "invalid_suggestion",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::Startup(_) => "startup",
            ServiceError::Storage(_) => "storage_error",
            ServiceError::Transport(_) => "transport_error",
        }
    }
}

impl From<TriggerError> for ServiceError {
    fn from(e: TriggerError) -> Self {
        match e {
            TriggerError::SessionFinished => ServiceError::SessionFinished,
            TriggerError::OutOfOrderTimestamp { last, got } => {
                ServiceError::OutOfOrderTimestamp { last, got }
            }
            TriggerError::UnknownTopic(t) => ServiceError::UnknownTopic(t),
            other => ServiceError::InvalidRequest(other.to_string()),
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::OutOfOrderTimestamp { last, got, .. } => {
                ServiceError::OutOfOrderTimestamp { last, got }
            }
            StoreError::SessionFinished(_) => ServiceError::SessionFinished,
            StoreError::UnknownSession(id) => ServiceError::UnknownSession(id.to_string()),
            other => ServiceError::Storage(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub topic: Option<String>,
    /// Overrides the configured assignment for this session.
    #[serde(default)]
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: SessionId,
    pub condition: Condition,
    pub topic: String,
    pub question: String,
    pub heartbeat_ms: u64,
    pub tips: Vec<SearchTip>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: String,
    #[serde(default = "typed")]
    pub source: QuerySource,
    pub t_ms: u64,
}

fn typed() -> QuerySource {
    QuerySource::Typed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<ScoredResult>,
    pub new_tips: Vec<SearchTip>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRequest {
    pub rank: u32,
    pub doc_id: String,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickResponse {
    pub document: Document,
    pub new_tips: Vec<SearchTip>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedRequest {
    pub t_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TipsResponse {
    pub new_tips: Vec<SearchTip>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TipAction {
    Expanded,
    SuggestionClicked { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TipInteractionRequest {
    pub kind: TipKind,
    #[serde(flatten)]
    pub action: TipAction,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub answer: AnswerLabel,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerAck {
    pub session_id: SessionId,
    pub finished: bool,
}

struct Assigner {
    mode: AssignmentMode,
    rng: ChaCha8Rng,
    alternate_next: Condition,
    topic_cursor: usize,
    next_id: u64,
}

impl Assigner {
    fn new(mode: AssignmentMode) -> Self {
        let seed = match mode {
            AssignmentMode::SeededRandom { seed } => seed,
            _ => 0,
        };
        Self {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            alternate_next: Condition::Companion,
            topic_cursor: 0,
            next_id: 1,
        }
    }

    fn condition(&mut self) -> Condition {
        match self.mode {
            AssignmentMode::Forced { condition } => condition,
            AssignmentMode::SeededRandom { .. } => {
                if self.rng.random_bool(0.5) {
                    Condition::Companion
                } else {
                    Condition::TenBlueLinks
                }
            }
            AssignmentMode::Alternating => {
                let c = self.alternate_next;
                self.alternate_next = match c {
                    Condition::Companion => Condition::TenBlueLinks,
                    Condition::TenBlueLinks => Condition::Companion,
                };
                c
            }
        }
    }
}

/// Shared service state. Index, catalog and tasks are read-only; the log
/// has a single writer behind a lock.
pub struct CompanionService {
    catalog: Arc<TipCatalog>,
    tasks: Arc<TaskSet>,
    backend: Arc<dyn SearchBackend>,
    page_size: usize,
    heartbeat_ms: u64,
    store: Mutex<EventStore>,
    sessions: Mutex<HashMap<SessionId, Arc<Mutex<SessionState>>>>,
    assigner: Mutex<Assigner>,
}

impl std::fmt::Debug for CompanionService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompanionService")
            .field("page_size", &self.page_size)
            .field("heartbeat_ms", &self.heartbeat_ms)
            .finish_non_exhaustive()
    }
}

pub struct ServiceParts {
    pub catalog: TipCatalog,
    pub tasks: TaskSet,
    pub backend: Arc<dyn SearchBackend>,
    pub store: EventStore,
    pub page_size: usize,
    pub heartbeat_ms: u64,
    pub assignment: AssignmentMode,
}

impl CompanionService {
    pub fn new(parts: ServiceParts) -> Result<Self, ServiceError> {
        if let Some(missing) = parts
            .tasks
            .topics()
            .find(|t| !parts.catalog.contains_topic(t))
        {
            return Err(ServiceError::Startup(format!(
                "task topic `{missing}` has no tips in the catalog"
            )));
        }
        let mut assigner = Assigner::new(parts.assignment);
        assigner.next_id = parts.store.session_count() as u64 + 1;
        Ok(Self {
            catalog: Arc::new(parts.catalog),
            tasks: Arc::new(parts.tasks),
            backend: parts.backend,
            page_size: parts.page_size.max(1),
            heartbeat_ms: parts.heartbeat_ms,
            store: Mutex::new(parts.store),
            sessions: Mutex::new(HashMap::new()),
            assigner: Mutex::new(assigner),
        })
    }

    /// Loads corpus, catalog and tasks named by the config, opens the log
    /// and resumes any unfinished sessions found in it.
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config
            .validate()
            .map_err(|e| ServiceError::Startup(e.to_string()))?;
        let startup =
            |what: &str, e: &dyn std::fmt::Display| ServiceError::Startup(format!("{what}: {e}"));
        let catalog = TipCatalog::load(&config.catalog).map_err(|e| startup("catalog", &e))?;
        let tasks = TaskSet::load(&config.tasks).map_err(|e| startup("tasks", &e))?;
        let index = Index::ingest_corpus(&config.corpus, config.bm25)
            .map_err(|e| startup("corpus", &e))?
            .with_snippet_width(config.snippet_width);
        let store = EventStore::open(&config.log).map_err(|e| startup("log", &e))?;
        let service = Self::new(ServiceParts {
            catalog,
            tasks,
            backend: Arc::new(index),
            store,
            page_size: config.page_size,
            heartbeat_ms: config.heartbeat_ms,
            assignment: config.assignment,
        })?;
        if config.log.exists() {
            let outcome =
                read_sessions(&config.log, ReadMode::Lenient).map_err(|e| startup("log", &e))?;
            let mut sessions = service.sessions.lock().expect("sessions lock");
            for record in outcome.sessions {
                let mut state =
                    SessionState::new(record.session_id.clone(), record.condition, &record.topic);
                if record.events.iter().all(|e| state.handle_event(e).is_ok()) {
                    sessions.insert(record.session_id, Arc::new(Mutex::new(state)));
                }
            }
        }
        Ok(service)
    }

    pub fn catalog(&self) -> &TipCatalog {
        &self.catalog
    }

    pub fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn heartbeat_ms(&self) -> u64 {
        self.heartbeat_ms
    }

    /// Runs `f` with the log writer, e.g. to read back an in-memory log.
    pub fn with_store<R>(&self, f: impl FnOnce(&EventStore) -> R) -> R {
        f(&self.store.lock().expect("store lock"))
    }

    fn session(&self, id: &SessionId) -> Result<Arc<Mutex<SessionState>>, ServiceError> {
        self.sessions
            .lock()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn tip(&self, topic: &str, kind: TipKind) -> SearchTip {
        self.catalog
            .tip_for(topic, kind)
            .expect("session topics are validated against the catalog")
            .clone()
    }

    /// Feeds one event through the session's machine and logs it together
    /// with any resulting `TipShown` events. Nothing is logged on error.
    fn record(
        &self,
        state: &mut SessionState,
        kind: EventKind,
        t_ms: u64,
    ) -> Result<Vec<SearchTip>, ServiceError> {
        let event = InteractionEvent::new(state.session_id().clone(), t_ms, kind);
        let mut next = state.clone();
        let actions = next.handle_event(&event)?;
        let mut store = self.store.lock().expect("store lock");
        store.append(&event)?;
        let mut tips = Vec::with_capacity(actions.len());
        for TriggerAction::ShowTip(kind) in actions {
            let shown = InteractionEvent::new(
                event.session_id.clone(),
                t_ms,
                EventKind::TipShown { tip: kind },
            );
            next.handle_event(&shown)?;
            store.append(&shown)?;
            tips.push(self.tip(next.topic(), kind));
        }
        *state = next;
        Ok(tips)
    }

    pub fn create_session(
        &self,
        req: CreateSessionRequest,
    ) -> Result<SessionCreated, ServiceError> {
        let (session_id, condition, topic) = {
            let mut assigner = self.assigner.lock().expect("assigner lock");
            let topic = match req.topic {
                Some(t) => t,
                None => {
                    let topics: Vec<&str> = self.tasks.topics().collect();
                    let t = topics[assigner.topic_cursor % topics.len()].to_string();
                    assigner.topic_cursor += 1;
                    t
                }
            };
            if self.tasks.get(&topic).is_none() || !self.catalog.contains_topic(&topic) {
                return Err(ServiceError::UnknownTopic(topic));
            }
            let condition = req.condition.unwrap_or_else(|| assigner.condition());
            let store = self.store.lock().expect("store lock");
            let id = loop {
                let id = SessionId::new(format!("s{:06}", assigner.next_id));
                assigner.next_id += 1;
                if !store.contains(&id) {
                    break id;
                }
            };
            (id, condition, topic)
        };
        let question = self
            .tasks
            .get(&topic)
            .map(|t| t.question.clone())
            .unwrap_or_default();
        let mut state = SessionState::new(session_id.clone(), condition, topic.clone());
        let start = EventKind::SessionStart {
            condition,
            topic: topic.clone(),
        };
        let tips = self.record(&mut state, start, 0)?;
        self.sessions
            .lock()
            .expect("sessions lock")
            .insert(session_id.clone(), Arc::new(Mutex::new(state)));
        Ok(SessionCreated {
            session_id,
            condition,
            topic,
            question,
            heartbeat_ms: self.heartbeat_ms,
            tips,
        })
    }

    pub fn submit_query(
        &self,
        id: &SessionId,
        req: QueryRequest,
    ) -> Result<QueryResponse, ServiceError> {
        let session = self.session(id)?;
        let mut state = session.lock().expect("session lock");
        let query = req.query.trim().to_string();
        let kind = EventKind::QuerySubmitted {
            query: query.clone(),
            source: req.source,
        };
        let new_tips = self.record(&mut state, kind, req.t_ms)?;
        let results = self.backend.search(&query, self.page_size);
        Ok(QueryResponse { results, new_tips })
    }

    pub fn click_result(
        &self,
        id: &SessionId,
        req: ClickRequest,
    ) -> Result<ClickResponse, ServiceError> {
        let session = self.session(id)?;
        let mut state = session.lock().expect("session lock");
        let document = self
            .backend
            .document(&req.doc_id)
            .map_err(|_| ServiceError::UnknownDoc(req.doc_id.clone()))?
            .clone();
        if req.rank == 0 {
            return Err(ServiceError::InvalidRequest("rank is 1-based".into()));
        }
        let kind = EventKind::ResultClicked {
            rank: req.rank,
            doc_id: req.doc_id,
        };
        let new_tips = self.record(&mut state, kind, req.t_ms)?;
        Ok(ClickResponse { document, new_tips })
    }

    pub fn return_to_serp(
        &self,
        id: &SessionId,
        req: TimedRequest,
    ) -> Result<TipsResponse, ServiceError> {
        self.simple(id, EventKind::ReturnedToSerp, req.t_ms)
    }

    pub fn heartbeat(
        &self,
        id: &SessionId,
        req: TimedRequest,
    ) -> Result<TipsResponse, ServiceError> {
        self.simple(id, EventKind::Heartbeat, req.t_ms)
    }

    fn simple(
        &self,
        id: &SessionId,
        kind: EventKind,
        t_ms: u64,
    ) -> Result<TipsResponse, ServiceError> {
        let session = self.session(id)?;
        let mut state = session.lock().expect("session lock");
        let new_tips = self.record(&mut state, kind, t_ms)?;
        Ok(TipsResponse { new_tips })
    }

    /// Logs an accordion expansion or a suggestion click on a shown tip.
    /// The event goes through the trigger machine like any other, so a
    /// due tip can come back in the response.
    pub fn tip_interaction(
        &self,
        id: &SessionId,
        req: TipInteractionRequest,
    ) -> Result<TipsResponse, ServiceError> {
        let session = self.session(id)?;
        let mut state = session.lock().expect("session lock");
        if state.is_finished() {
            return Err(ServiceError::SessionFinished);
        }
        if !state.tips_shown().contains(&req.kind) {
            return Err(ServiceError::TipNotShown(req.kind));
        }
        let kind = match req.action {
            TipAction::Expanded => EventKind::TipExpanded { tip: req.kind },
            TipAction::SuggestionClicked { index } => {
                let tip = self.tip(state.topic(), req.kind);
                if index >= tip.suggestions.len() {
                    return Err(ServiceError::InvalidSuggestion {
                        tip: req.kind,
                        index,
                    });
                }
                EventKind::SuggestionClicked {
                    tip: req.kind,
                    index,
                }
            }
        };
        let new_tips = self.record(&mut state, kind, req.t_ms)?;
        Ok(TipsResponse { new_tips })
    }

    pub fn submit_answer(
        &self,
        id: &SessionId,
        req: AnswerRequest,
    ) -> Result<AnswerAck, ServiceError> {
        let session = self.session(id)?;
        let mut state = session.lock().expect("session lock");
        self.record(
            &mut state,
            EventKind::AnswerSubmitted { answer: req.answer },
            req.t_ms,
        )?;
        Ok(AnswerAck {
            session_id: id.clone(),
            finished: true,
        })
    }

    pub fn get_document(&self, doc_id: &str) -> Result<Document, ServiceError> {
        self.backend
            .document(doc_id)
            .cloned()
            .map_err(|_| ServiceError::UnknownDoc(doc_id.to_string()))
    }
}

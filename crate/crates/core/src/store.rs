//! Append-only interaction log.
//!
//! One JSON object per line, sessions interleaved freely:
//!
//! ```text
//! {"session_id":"s000001","wall_time":"2026-01-01T00:00:00.000Z","t_ms":0,"kind":"session_start","payload":{"condition":"companion","topic":"probiotics"}}
//! {"session_id":"s000001","wall_time":"2026-01-01T00:00:04.210Z","t_ms":4210,"kind":"query_submitted","payload":{"query":"probiotics eczema","source":"typed"}}
//! ```
//!
//! `t_ms` is client-relative to the session start; `wall_time` is the
//! server clock at write time and is not used by analytics.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{AnswerLabel, Condition, EventKind, InteractionEvent, SessionId};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session `{0}`")]
    UnknownSession(SessionId),
    #[error("session `{0}` already exists")]
    DuplicateSession(SessionId),
    #[error("session `{session_id}`: timestamp {got} ms is earlier than {last} ms")]
    OutOfOrderTimestamp {
        session_id: SessionId,
        last: u64,
        got: u64,
    },
    #[error("session `{0}` is finished")]
    SessionFinished(SessionId),
    #[error("line {line}: corrupt record: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("session `{session_id}` is not a valid stream: {reason}")]
    InvalidSession {
        session_id: SessionId,
        reason: String,
    },
    #[error("storage error on {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub session_id: SessionId,
    pub wall_time: DateTime<Utc>,
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        // Fixed millisecond precision keeps lines stable across platforms.
        let mut value = serde_json::to_value(self).expect("log record serializes");
        value["wall_time"] = self
            .wall_time
            .to_rfc3339_opts(SecondsFormat::Millis, true)
            .into();
        serde_json::to_string(&value).expect("log record serializes")
    }

    pub fn event(&self) -> InteractionEvent {
        InteractionEvent::new(self.session_id.clone(), self.t_ms, self.kind.clone())
    }
}

/// A reconstructed session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub condition: Condition,
    pub topic: String,
    pub assigned_at: DateTime<Utc>,
    pub answer: Option<AnswerLabel>,
    pub events: Vec<InteractionEvent>,
}

#[derive(Debug, Clone, Copy)]
pub enum WallClock {
    System,
    Fixed(DateTime<Utc>),
}

impl WallClock {
    fn now(&self) -> DateTime<Utc> {
        match self {
            WallClock::System => Utc::now(),
            WallClock::Fixed(t) => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// Abort on the first corrupt line or invalid session.
    Strict,
    /// Skip corrupt lines and invalid sessions, counting them.
    Lenient,
}

#[derive(Debug, Default)]
pub struct ReadOutcome {
    pub sessions: Vec<SessionRecord>,
    /// `(line number, reason)` of skipped lines.
    pub skipped_lines: Vec<(usize, String)>,
    pub rejected_sessions: Vec<(SessionId, String)>,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    last_t_ms: u64,
    finished: bool,
}

enum Sink {
    File { path: PathBuf, file: File },
    Memory(Vec<u8>),
}

/// Single-writer append handle for one log.
pub struct EventStore {
    sink: Sink,
    sessions: HashMap<SessionId, Cursor>,
    order: Vec<SessionId>,
    clock: WallClock,
}

impl std::fmt::Debug for EventStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventStore")
            .field("sessions", &self.sessions.len())
            .finish()
    }
}

impl EventStore {
    /// Opens (or creates) a log file for appending. Sessions already in the
    /// file are recovered so their streams can continue.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let storage = |source| StoreError::Storage {
            path: path.clone(),
            source,
        };
        let mut store = Self {
            sink: Sink::Memory(Vec::new()),
            sessions: HashMap::new(),
            order: Vec::new(),
            clock: WallClock::System,
        };
        if path.exists() {
            let file = File::open(&path).map_err(storage)?;
            for record in scan_records(file, ReadMode::Lenient)?.0 {
                store.track(&record.session_id, record.t_ms, &record.kind);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        store.sink = Sink::File { path, file };
        Ok(store)
    }

    pub fn in_memory() -> Self {
        Self {
            sink: Sink::Memory(Vec::new()),
            sessions: HashMap::new(),
            order: Vec::new(),
            clock: WallClock::System,
        }
    }

    pub fn with_clock(mut self, clock: WallClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn contains(&self, session_id: &SessionId) -> bool {
        self.sessions.contains_key(session_id)
    }

    pub fn session_count(&self) -> usize {
        self.order.len()
    }

    /// Log contents of an in-memory store.
    pub fn memory_contents(&self) -> Option<&[u8]> {
        match &self.sink {
            Sink::Memory(buf) => Some(buf),
            Sink::File { .. } => None,
        }
    }

    fn track(&mut self, id: &SessionId, t_ms: u64, kind: &EventKind) {
        let cursor = self.sessions.entry(id.clone()).or_insert_with(|| {
            self.order.push(id.clone());
            Cursor {
                last_t_ms: 0,
                finished: false,
            }
        });
        cursor.last_t_ms = cursor.last_t_ms.max(t_ms);
        if matches!(kind, EventKind::AnswerSubmitted { .. }) {
            cursor.finished = true;
        }
    }

    /// Appends one event. A session is opened by its `SessionStart`; every
    /// other event needs an open session and a non-decreasing `t_ms`.
    pub fn append(&mut self, event: &InteractionEvent) -> Result<(), StoreError> {
        let id = &event.session_id;
        match (&event.kind, self.sessions.get(id)) {
            (EventKind::SessionStart { .. }, Some(_)) => {
                return Err(StoreError::DuplicateSession(id.clone()))
            }
            (EventKind::SessionStart { .. }, None) => {}
            (_, None) => return Err(StoreError::UnknownSession(id.clone())),
            (_, Some(cursor)) if cursor.finished => {
                return Err(StoreError::SessionFinished(id.clone()))
            }
            (_, Some(cursor)) if event.t_ms < cursor.last_t_ms => {
                return Err(StoreError::OutOfOrderTimestamp {
                    session_id: id.clone(),
                    last: cursor.last_t_ms,
                    got: event.t_ms,
                })
            }
            _ => {}
        }
        let record = LogRecord {
            session_id: id.clone(),
            wall_time: self.clock.now(),
            t_ms: event.t_ms,
            kind: event.kind.clone(),
        };
        let mut line = record.to_line();
        line.push('\n');
        match &mut self.sink {
            Sink::File { path, file } => {
                file.write_all(line.as_bytes())
                    .and_then(|_| file.flush())
                    .map_err(|source| StoreError::Storage {
                        path: path.clone(),
                        source,
                    })?;
            }
            Sink::Memory(buf) => buf.extend_from_slice(line.as_bytes()),
        }
        self.track(id, event.t_ms, &event.kind);
        Ok(())
    }
}

/// Parsed records plus (line, reason) for every skipped line.
type Scan = (Vec<LogRecord>, Vec<(usize, String)>);

fn scan_records(reader: impl Read, mode: ReadMode) -> Result<Scan, StoreError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let parsed = line.map_err(|e| e.to_string()).and_then(|l| {
            if l.trim().is_empty() {
                Ok(None)
            } else {
                serde_json::from_str::<LogRecord>(&l)
                    .map(Some)
                    .map_err(|e| e.to_string())
            }
        });
        match parsed {
            Ok(Some(record)) => records.push(record),
            Ok(None) => {}
            Err(reason) if mode == ReadMode::Strict => {
                return Err(StoreError::CorruptRecord {
                    line: line_no,
                    reason,
                })
            }
            Err(reason) => skipped.push((line_no, reason)),
        }
    }
    Ok((records, skipped))
}

fn build_session(records: Vec<LogRecord>) -> Result<SessionRecord, String> {
    let first = records.first().ok_or("empty session")?;
    let EventKind::SessionStart { condition, topic } = &first.kind else {
        return Err("first event is not session_start".into());
    };
    if first.t_ms != 0 {
        return Err("session_start is not at t_ms = 0".into());
    }
    let mut session = SessionRecord {
        session_id: first.session_id.clone(),
        condition: *condition,
        topic: topic.clone(),
        assigned_at: first.wall_time,
        answer: None,
        events: Vec::with_capacity(records.len()),
    };
    let mut last_t = 0;
    for record in records {
        if record.t_ms < last_t {
            return Err(format!("timestamp {} after {}", record.t_ms, last_t));
        }
        last_t = record.t_ms;
        if session.answer.is_some() {
            return Err("events after answer_submitted".into());
        }
        match &record.kind {
            EventKind::SessionStart { .. } if !session.events.is_empty() => {
                return Err("repeated session_start".into())
            }
            EventKind::AnswerSubmitted { answer } => session.answer = Some(*answer),
            _ => {}
        }
        session.events.push(record.event());
    }
    Ok(session)
}

/// Reconstructs every session in a log, in order of first appearance.
pub fn read_sessions_from(reader: impl Read, mode: ReadMode) -> Result<ReadOutcome, StoreError> {
    let (records, skipped_lines) = scan_records(reader, mode)?;
    let mut order: Vec<SessionId> = Vec::new();
    let mut grouped: HashMap<SessionId, Vec<LogRecord>> = HashMap::new();
    for record in records {
        grouped
            .entry(record.session_id.clone())
            .or_insert_with(|| {
                order.push(record.session_id.clone());
                Vec::new()
            })
            .push(record);
    }
    let mut outcome = ReadOutcome {
        skipped_lines,
        ..Default::default()
    };
    for id in order {
        let records = grouped.remove(&id).unwrap_or_default();
        match build_session(records) {
            Ok(session) => outcome.sessions.push(session),
            Err(reason) if mode == ReadMode::Strict => {
                return Err(StoreError::InvalidSession {
                    session_id: id,
                    reason,
                })
            }
            Err(reason) => outcome.rejected_sessions.push((id, reason)),
        }
    }
    Ok(outcome)
}

pub fn read_sessions(path: impl AsRef<Path>, mode: ReadMode) -> Result<ReadOutcome, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| StoreError::Storage {
        path: path.to_path_buf(),
        source,
    })?;
    read_sessions_from(file, mode)
}

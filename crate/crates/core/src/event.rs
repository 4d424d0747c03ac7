//! Interaction events shared by the trigger engine, the event log and analytics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::TipKind;

/// Opaque session identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The system variant a participant is assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TenBlueLinks,
    Companion,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::TenBlueLinks, Condition::Companion];

    pub fn label(self) -> &'static str {
        match self {
            Condition::TenBlueLinks => "10-blue-links",
            Condition::Companion => "companion",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "companion" => Ok(Condition::Companion),
            "ten_blue_links" | "10-blue-links" | "baseline" => Ok(Condition::TenBlueLinks),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    Typed,
    Suggestion,
}

/// Answer to the task question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerLabel {
    Helpful,
    NotHelpful,
}

impl AnswerLabel {
    pub fn flipped(self) -> Self {
        match self {
            AnswerLabel::Helpful => AnswerLabel::NotHelpful,
            AnswerLabel::NotHelpful => AnswerLabel::Helpful,
        }
    }
}

/// Typed payload of one interaction event.
///
/// Serialized adjacently tagged so a log line carries `kind` and `payload`
/// as separate fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    /// Opens the session; carries the session metadata.
    SessionStart {
        condition: Condition,
        topic: String,
    },
    QuerySubmitted {
        query: String,
        source: QuerySource,
    },
    ResultClicked {
        rank: u32,
        doc_id: String,
    },
    ReturnedToSerp,
    Heartbeat,
    TipShown {
        tip: TipKind,
    },
    TipExpanded {
        tip: TipKind,
    },
    SuggestionClicked {
        tip: TipKind,
        index: usize,
    },
    AnswerSubmitted {
        answer: AnswerLabel,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionStart { .. } => "session_start",
            EventKind::QuerySubmitted { .. } => "query_submitted",
            EventKind::ResultClicked { .. } => "result_clicked",
            EventKind::ReturnedToSerp => "returned_to_serp",
            EventKind::Heartbeat => "heartbeat",
            EventKind::TipShown { .. } => "tip_shown",
            EventKind::TipExpanded { .. } => "tip_expanded",
            EventKind::SuggestionClicked { .. } => "suggestion_clicked",
            EventKind::AnswerSubmitted { .. } => "answer_submitted",
        }
    }
}

/// One timestamped user or system action. `t_ms` is relative to the
/// session's `SessionStart`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub session_id: SessionId,
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl InteractionEvent {
    pub fn new(session_id: SessionId, t_ms: u64, kind: EventKind) -> Self {
        Self {
            session_id,
            t_ms,
            kind,
        }
    }
}

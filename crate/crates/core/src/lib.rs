//! Core of the interactive search companion: a local BM25 search service whose
//! result pages are augmented with context-aware search tips, an append-only
//! interaction log, a simulated-user harness and the study analytics.

pub mod analytics;
pub mod catalog;
pub mod config;
pub mod event;
pub mod invariants;
pub mod search;
pub mod service;
pub mod sim;
pub mod store;
pub mod tasks;
pub mod trigger;

pub use catalog::{QuerySuggestion, SearchTip, TipCatalog, TipKind};
pub use event::{AnswerLabel, Condition, EventKind, InteractionEvent, QuerySource, SessionId};
pub use search::{Document, Index, ScoredResult};
pub use trigger::{SessionState, TriggerAction};

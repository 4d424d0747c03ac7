//! Per-session tip trigger machine.
//!
//! The machine is a pure function of the event stream: timers are evaluated
//! against event timestamps, never against a wall clock. Rules, for the
//! companion condition:
//!
//! * `SessionStart` shows ① (clarify need).
//! * The first `QuerySubmitted` shows ② (optimize query).
//! * The first event at or after `first_query + 20 s` shows ③ (explore
//!   results), unless a result was clicked before that deadline.
//!   `AnswerSubmitted` closes the session and never triggers.
//! * The first `ReturnedToSerp` after the first `ResultClicked` shows ④
//!   (compare results).
//!
//! Every tip is shown at most once. The 10-blue-links condition keeps the
//! same bookkeeping but never shows a tip.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{TipCatalog, TipKind};
use crate::event::{Condition, EventKind, InteractionEvent, SessionId};

/// Time without a result click after the first query before ③ is due.
pub const EXPLORE_DEADLINE_MS: u64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerAction {
    ShowTip(TipKind),
}

impl TriggerAction {
    pub fn tip(self) -> TipKind {
        match self {
            TriggerAction::ShowTip(kind) => kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TriggerError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("event for session `{got}` fed to session `{expected}`")]
    SessionMismatch { expected: SessionId, got: SessionId },
    #[error("session is finished")]
    SessionFinished,
    #[error("timestamp {got} ms is earlier than the last seen {last} ms")]
    OutOfOrderTimestamp { last: u64, got: u64 },
    #[error("session stream must open with session_start")]
    MissingSessionStart,
    #[error("session_start occurs more than once")]
    DuplicateSessionStart,
    #[error("invalid event: {0}")]
    InvalidEvent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionState {
    session_id: SessionId,
    condition: Condition,
    topic: String,
    started: bool,
    last_t_ms: u64,
    first_query_at: Option<u64>,
    first_click_at: Option<u64>,
    doc_visits: u32,
    returns_after_first_visit: u32,
    tips_shown: BTreeSet<TipKind>,
    finished: bool,
}

/// Creates a fresh session after checking the topic against the catalog.
pub fn new_session(
    session_id: SessionId,
    condition: Condition,
    topic: &str,
    catalog: &TipCatalog,
) -> Result<SessionState, TriggerError> {
    if !catalog.contains_topic(topic) {
        return Err(TriggerError::UnknownTopic(topic.to_string()));
    }
    Ok(SessionState::new(session_id, condition, topic))
}

impl SessionState {
    /// Fresh state without topic validation; see [`new_session`].
    pub fn new(session_id: SessionId, condition: Condition, topic: impl Into<String>) -> Self {
        Self {
            session_id,
            condition,
            topic: topic.into(),
            started: false,
            last_t_ms: 0,
            first_query_at: None,
            first_click_at: None,
            doc_visits: 0,
            returns_after_first_visit: 0,
            tips_shown: BTreeSet::new(),
            finished: false,
        }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn first_query_at(&self) -> Option<u64> {
        self.first_query_at
    }

    pub fn any_result_clicked(&self) -> bool {
        self.first_click_at.is_some()
    }

    pub fn doc_visits(&self) -> u32 {
        self.doc_visits
    }

    pub fn returns_after_first_visit(&self) -> u32 {
        self.returns_after_first_visit
    }

    pub fn tips_shown(&self) -> &BTreeSet<TipKind> {
        &self.tips_shown
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn last_t_ms(&self) -> u64 {
        self.last_t_ms
    }

    fn validate(&self, event: &InteractionEvent) -> Result<(), TriggerError> {
        if event.session_id != self.session_id {
            return Err(TriggerError::SessionMismatch {
                expected: self.session_id.clone(),
                got: event.session_id.clone(),
            });
        }
        if self.finished {
            return Err(TriggerError::SessionFinished);
        }
        if event.t_ms < self.last_t_ms {
            return Err(TriggerError::OutOfOrderTimestamp {
                last: self.last_t_ms,
                got: event.t_ms,
            });
        }
        match (&event.kind, self.started) {
            (EventKind::SessionStart { .. }, true) => Err(TriggerError::DuplicateSessionStart),
            (EventKind::SessionStart { condition, topic }, false) => {
                if event.t_ms != 0 {
                    Err(TriggerError::InvalidEvent(
                        "session_start must be at t_ms = 0".into(),
                    ))
                } else if *condition != self.condition || *topic != self.topic {
                    Err(TriggerError::InvalidEvent(
                        "session_start metadata differs from the session".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            (_, false) => Err(TriggerError::MissingSessionStart),
            (EventKind::ResultClicked { rank: 0, .. }, true) => {
                Err(TriggerError::InvalidEvent("result rank is 1-based".into()))
            }
            _ => Ok(()),
        }
    }

    fn explore_tip_due(&self, t_ms: u64) -> bool {
        let Some(first_query) = self.first_query_at else {
            return false;
        };
        let deadline = first_query + EXPLORE_DEADLINE_MS;
        t_ms >= deadline
            && self.first_click_at.is_none_or(|click| click >= deadline)
            && !self.tips_shown.contains(&TipKind::ExploreResults)
    }

    /// Consumes one event. On error the state is left untouched.
    pub fn handle_event(
        &mut self,
        event: &InteractionEvent,
    ) -> Result<Vec<TriggerAction>, TriggerError> {
        self.validate(event)?;
        let t = event.t_ms;
        let mut due = Vec::new();

        if !matches!(event.kind, EventKind::AnswerSubmitted { .. }) && self.explore_tip_due(t) {
            due.push(TipKind::ExploreResults);
        }
        match &event.kind {
            EventKind::SessionStart { .. } => {
                self.started = true;
                due.push(TipKind::ClarifyNeed);
            }
            EventKind::QuerySubmitted { .. } => {
                if self.first_query_at.is_none() {
                    self.first_query_at = Some(t);
                    due.push(TipKind::OptimizeQuery);
                }
            }
            EventKind::ResultClicked { .. } => {
                self.doc_visits += 1;
                self.first_click_at.get_or_insert(t);
            }
            EventKind::ReturnedToSerp => {
                if self.first_click_at.is_some() {
                    self.returns_after_first_visit += 1;
                    due.push(TipKind::CompareResults);
                }
            }
            EventKind::AnswerSubmitted { .. } => self.finished = true,
            EventKind::Heartbeat
            | EventKind::TipShown { .. }
            | EventKind::TipExpanded { .. }
            | EventKind::SuggestionClicked { .. } => {}
        }
        self.last_t_ms = t;

        if self.condition == Condition::TenBlueLinks {
            return Ok(Vec::new());
        }
        Ok(due
            .into_iter()
            .filter(|kind| self.tips_shown.insert(*kind))
            .map(TriggerAction::ShowTip)
            .collect())
    }
}

/// Folds a complete session stream through a fresh machine built from its
/// `SessionStart` and returns every action with the timestamp of the event
/// that caused it.
pub fn replay(events: &[InteractionEvent]) -> Result<Vec<(u64, TriggerAction)>, TriggerError> {
    let Some(first) = events.first() else {
        return Ok(Vec::new());
    };
    let EventKind::SessionStart { condition, topic } = &first.kind else {
        return Err(TriggerError::MissingSessionStart);
    };
    let mut state = SessionState::new(first.session_id.clone(), *condition, topic.clone());
    let mut out = Vec::new();
    for event in events {
        for action in state.handle_event(event)? {
            out.push((event.t_ms, action));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{AnswerLabel, QuerySource};
    use crate::invariants;
    use proptest::prelude::*;

    use TipKind::*;

    fn sid() -> SessionId {
        SessionId::new("s1")
    }

    fn ev(t: u64, kind: EventKind) -> InteractionEvent {
        InteractionEvent::new(sid(), t, kind)
    }

    fn start(condition: Condition) -> InteractionEvent {
        ev(
            0,
            EventKind::SessionStart {
                condition,
                topic: "probiotics".into(),
            },
        )
    }

    fn query(t: u64) -> InteractionEvent {
        ev(
            t,
            EventKind::QuerySubmitted {
                query: "probiotics eczema".into(),
                source: QuerySource::Typed,
            },
        )
    }

    fn click(t: u64) -> InteractionEvent {
        ev(
            t,
            EventKind::ResultClicked {
                rank: 1,
                doc_id: "d14".into(),
            },
        )
    }

    fn answer(t: u64) -> InteractionEvent {
        ev(
            t,
            EventKind::AnswerSubmitted {
                answer: AnswerLabel::NotHelpful,
            },
        )
    }

    fn companion() -> SessionState {
        let mut s = SessionState::new(sid(), Condition::Companion, "probiotics");
        s.handle_event(&start(Condition::Companion)).unwrap();
        s
    }

    fn shows(kinds: &[TipKind]) -> Vec<TriggerAction> {
        kinds.iter().copied().map(TriggerAction::ShowTip).collect()
    }

    #[test]
    fn new_session_validates_topic() {
        let cat = TipCatalog::builtin();
        let s = new_session(sid(), Condition::Companion, "probiotics", &cat).unwrap();
        assert!(s.tips_shown().is_empty());
        assert!(!s.is_finished());
        assert_eq!(
            new_session(SessionId::new("s3"), Condition::Companion, "bogus", &cat),
            Err(TriggerError::UnknownTopic("bogus".into()))
        );
    }

    #[test]
    fn session_start_shows_clarify_tip() {
        let mut s = SessionState::new(sid(), Condition::Companion, "probiotics");
        assert_eq!(
            s.handle_event(&start(Condition::Companion)).unwrap(),
            shows(&[ClarifyNeed])
        );
    }

    #[test]
    fn first_query_shows_optimize_tip_once() {
        let mut s = companion();
        assert_eq!(
            s.handle_event(&query(5000)).unwrap(),
            shows(&[OptimizeQuery])
        );
        assert_eq!(s.first_query_at(), Some(5000));
        assert!(s.handle_event(&query(8000)).unwrap().is_empty());
        assert_eq!(s.first_query_at(), Some(5000));
    }

    #[test]
    fn heartbeat_after_deadline_shows_explore_tip() {
        let mut s = companion();
        s.handle_event(&query(5000)).unwrap();
        assert!(s
            .handle_event(&ev(24_999, EventKind::Heartbeat))
            .unwrap()
            .is_empty());
        assert_eq!(
            s.handle_event(&ev(25_000, EventKind::Heartbeat)).unwrap(),
            shows(&[ExploreResults])
        );
        assert!(s
            .handle_event(&ev(30_000, EventKind::Heartbeat))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn click_before_deadline_suppresses_explore_tip() {
        let mut s = companion();
        s.handle_event(&query(5000)).unwrap();
        s.handle_event(&click(12_000)).unwrap();
        assert!(s
            .handle_event(&ev(30_000, EventKind::Heartbeat))
            .unwrap()
            .is_empty());
        assert!(s
            .handle_event(&ev(90_000, EventKind::Heartbeat))
            .unwrap()
            .is_empty());
        assert!(!s.tips_shown().contains(&ExploreResults));
    }

    #[test]
    fn click_at_deadline_still_sees_explore_tip_first() {
        let mut s = companion();
        s.handle_event(&query(5000)).unwrap();
        assert_eq!(
            s.handle_event(&click(25_000)).unwrap(),
            shows(&[ExploreResults])
        );
    }

    #[test]
    fn first_return_after_click_shows_compare_tip_once() {
        let mut s = companion();
        s.handle_event(&click(12_000)).unwrap();
        assert_eq!(
            s.handle_event(&ev(40_000, EventKind::ReturnedToSerp))
                .unwrap(),
            shows(&[CompareResults])
        );
        assert!(s
            .handle_event(&ev(90_000, EventKind::ReturnedToSerp))
            .unwrap()
            .is_empty());
        assert_eq!(s.returns_after_first_visit(), 2);
    }

    #[test]
    fn return_without_click_shows_nothing() {
        let mut s = companion();
        assert!(s
            .handle_event(&ev(3000, EventKind::ReturnedToSerp))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn any_event_past_deadline_triggers_explore_tip() {
        let mut s = companion();
        s.handle_event(&query(1000)).unwrap();
        let expand = ev(21_000, EventKind::TipExpanded { tip: OptimizeQuery });
        assert_eq!(s.handle_event(&expand).unwrap(), shows(&[ExploreResults]));
    }

    #[test]
    fn baseline_never_shows_tips() {
        let mut s = SessionState::new(sid(), Condition::TenBlueLinks, "caffeine");
        let start = ev(
            0,
            EventKind::SessionStart {
                condition: Condition::TenBlueLinks,
                topic: "caffeine".into(),
            },
        );
        assert!(s.handle_event(&start).unwrap().is_empty());
        assert!(s.handle_event(&query(1000)).unwrap().is_empty());
        assert!(s
            .handle_event(&ev(40_000, EventKind::Heartbeat))
            .unwrap()
            .is_empty());
        assert!(s.handle_event(&click(41_000)).unwrap().is_empty());
        assert!(s
            .handle_event(&ev(50_000, EventKind::ReturnedToSerp))
            .unwrap()
            .is_empty());
        assert!(s.tips_shown().is_empty());
        assert_eq!(s.doc_visits(), 1);
        assert_eq!(s.first_query_at(), Some(1000));
    }

    #[test]
    fn answer_finishes_and_never_triggers() {
        let mut s = companion();
        s.handle_event(&query(1000)).unwrap();
        assert!(s.handle_event(&answer(60_000)).unwrap().is_empty());
        assert!(s.is_finished());
        assert_eq!(
            s.handle_event(&ev(61_000, EventKind::Heartbeat)),
            Err(TriggerError::SessionFinished)
        );
    }

    #[test]
    fn errors_leave_state_untouched() {
        let mut s = companion();
        s.handle_event(&query(3000)).unwrap();
        let before = s.clone();
        assert_eq!(
            s.handle_event(&ev(500, EventKind::Heartbeat)),
            Err(TriggerError::OutOfOrderTimestamp {
                last: 3000,
                got: 500
            })
        );
        let other = InteractionEvent::new(SessionId::new("x"), 4000, EventKind::Heartbeat);
        assert!(matches!(
            s.handle_event(&other),
            Err(TriggerError::SessionMismatch { .. })
        ));
        assert_eq!(
            s.handle_event(&ev(
                4000,
                EventKind::ResultClicked {
                    rank: 0,
                    doc_id: "d".into()
                }
            )),
            Err(TriggerError::InvalidEvent("result rank is 1-based".into()))
        );
        assert_eq!(
            companion().handle_event(&start(Condition::Companion)),
            Err(TriggerError::DuplicateSessionStart)
        );
        assert_eq!(s, before);
    }

    #[test]
    fn stream_must_open_with_session_start() {
        let mut s = SessionState::new(sid(), Condition::Companion, "probiotics");
        assert_eq!(
            s.handle_event(&query(0)),
            Err(TriggerError::MissingSessionStart)
        );
        assert_eq!(replay(&[query(0)]), Err(TriggerError::MissingSessionStart));
    }

    #[test]
    fn replay_minimal_session() {
        let out = replay(&[start(Condition::Companion), answer(10_000)]).unwrap();
        assert_eq!(out, vec![(0, TriggerAction::ShowTip(ClarifyNeed))]);
    }

    #[test]
    fn replay_click_then_return_pattern() {
        // Hand-simulated: ① at start, ② at the first query, no ③ because the
        // click precedes the deadline, ④ at the first return.
        let stream = vec![
            start(Condition::Companion),
            query(4000),
            ev(9000, EventKind::Heartbeat),
            click(11_000),
            ev(30_000, EventKind::ReturnedToSerp),
            ev(35_000, EventKind::Heartbeat),
            answer(50_000),
        ];
        let out = replay(&stream).unwrap();
        assert_eq!(
            out,
            vec![
                (0, TriggerAction::ShowTip(ClarifyNeed)),
                (4000, TriggerAction::ShowTip(OptimizeQuery)),
                (30_000, TriggerAction::ShowTip(CompareResults)),
            ]
        );
        assert_eq!(replay(&stream).unwrap(), out);
    }

    #[test]
    fn compare_tip_can_precede_explore_tip() {
        let stream = vec![
            start(Condition::Companion),
            click(5000),
            ev(8000, EventKind::ReturnedToSerp),
            query(9000),
        ];
        let kinds: Vec<_> = replay(&stream)
            .unwrap()
            .into_iter()
            .map(|(_, a)| a.tip())
            .collect();
        assert_eq!(kinds, [ClarifyNeed, CompareResults, OptimizeQuery]);
    }

    fn arb_kind() -> impl Strategy<Value = EventKind> {
        prop_oneof![
            3 => Just(EventKind::Heartbeat),
            2 => Just(EventKind::QuerySubmitted { query: "q".into(), source: QuerySource::Typed }),
            2 => (1u32..11).prop_map(|rank| EventKind::ResultClicked { rank, doc_id: "d".into() }),
            2 => Just(EventKind::ReturnedToSerp),
            1 => Just(EventKind::TipExpanded { tip: ClarifyNeed }),
        ]
    }

    fn arb_stream() -> impl Strategy<Value = Vec<InteractionEvent>> {
        (
            prop::bool::ANY,
            prop::collection::vec((0u64..9000, arb_kind()), 0..30),
            prop::bool::ANY,
        )
            .prop_map(|(companion, steps, answered)| {
                let condition = if companion {
                    Condition::Companion
                } else {
                    Condition::TenBlueLinks
                };
                let mut t = 0;
                let mut out = vec![start(condition)];
                for (gap, kind) in steps {
                    t += gap;
                    out.push(ev(t, kind));
                }
                if answered {
                    out.push(answer(t + 1000));
                }
                out
            })
    }

    proptest! {
        #[test]
        fn replay_satisfies_stream_invariants(stream in arb_stream()) {
            let shown: Vec<(u64, TipKind)> =
                replay(&stream).unwrap().into_iter().map(|(t, a)| (t, a.tip())).collect();
            let violations = invariants::check_session(&stream, &shown);
            prop_assert!(violations.is_empty(), "{:?}", violations);
        }

        #[test]
        fn replay_is_deterministic(stream in arb_stream()) {
            prop_assert_eq!(replay(&stream).unwrap(), replay(&stream).unwrap());
        }
    }
}

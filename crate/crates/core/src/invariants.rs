//! Brute-force checks of tip presentation against a raw session stream.
//!
//! Each rule is re-derived by scanning the whole stream, without going
//! through the trigger machine, so the checker can judge its output.

use std::collections::BTreeMap;
use std::fmt;

use crate::catalog::TipKind;
use crate::event::{Condition, EventKind, InteractionEvent};
use crate::trigger::EXPLORE_DEADLINE_MS;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub session_id: String,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "session {}: {}: {}",
            self.session_id, self.rule, self.detail
        )
    }
}

/// The `(t_ms, tip)` sequence a log records through `TipShown` events.
pub fn logged_tips(events: &[InteractionEvent]) -> Vec<(u64, TipKind)> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::TipShown { tip } => Some((e.t_ms, tip)),
            _ => None,
        })
        .collect()
}

/// When each tip would be due for this stream under the companion rules,
/// regardless of the session's condition. Derived by rescanning.
pub fn tip_schedule(events: &[InteractionEvent]) -> BTreeMap<TipKind, u64> {
    let mut expected = BTreeMap::new();
    if !matches!(
        events.first().map(|e| &e.kind),
        Some(EventKind::SessionStart { .. })
    ) {
        return expected;
    }
    expected.insert(TipKind::ClarifyNeed, 0);

    let first_query = events
        .iter()
        .find(|e| matches!(e.kind, EventKind::QuerySubmitted { .. }))
        .map(|e| e.t_ms);
    if let Some(fq) = first_query {
        expected.insert(TipKind::OptimizeQuery, fq);
        let deadline = fq + EXPLORE_DEADLINE_MS;
        let clicked_early = events
            .iter()
            .any(|e| matches!(e.kind, EventKind::ResultClicked { .. }) && e.t_ms < deadline);
        let observer = events
            .iter()
            .find(|e| e.t_ms >= deadline && !matches!(e.kind, EventKind::AnswerSubmitted { .. }));
        if let (false, Some(e)) = (clicked_early, observer) {
            expected.insert(TipKind::ExploreResults, e.t_ms);
        }
    }

    if let Some(click_pos) = events
        .iter()
        .position(|e| matches!(e.kind, EventKind::ResultClicked { .. }))
    {
        if let Some(ret) = events[click_pos..]
            .iter()
            .find(|e| matches!(e.kind, EventKind::ReturnedToSerp))
        {
            expected.insert(TipKind::CompareResults, ret.t_ms);
        }
    }
    expected
}

fn expected_tips(events: &[InteractionEvent]) -> BTreeMap<TipKind, u64> {
    let companion = matches!(
        events.first().map(|e| &e.kind),
        Some(EventKind::SessionStart {
            condition: Condition::Companion,
            ..
        })
    );
    if companion {
        tip_schedule(events)
    } else {
        BTreeMap::new()
    }
}

/// Checks the tips `shown` for one session stream against every rule:
/// at-most-once, ① first, ② before ③, exact ③ and ④ conditions, and no
/// tips at all in the 10-blue-links condition.
pub fn check_session(events: &[InteractionEvent], shown: &[(u64, TipKind)]) -> Vec<Violation> {
    let session_id = events
        .first()
        .map(|e| e.session_id.to_string())
        .unwrap_or_default();
    let mut out = Vec::new();
    let mut violation = |rule: &'static str, detail: String| {
        out.push(Violation {
            session_id: session_id.clone(),
            rule,
            detail,
        })
    };

    let mut seen: BTreeMap<TipKind, usize> = BTreeMap::new();
    for (_, kind) in shown {
        *seen.entry(*kind).or_default() += 1;
    }
    for (kind, count) in &seen {
        if *count > 1 {
            violation("at-most-once", format!("{kind} shown {count} times"));
        }
    }

    let baseline = matches!(
        events.first().map(|e| &e.kind),
        Some(EventKind::SessionStart {
            condition: Condition::TenBlueLinks,
            ..
        })
    );
    if baseline && !shown.is_empty() {
        violation("baseline-nullity", format!("{} tips shown", shown.len()));
    }

    if let Some((_, first)) = shown.first() {
        if *first != TipKind::ClarifyNeed {
            violation("clarify-first", format!("first tip is {first}"));
        }
    }
    let position = |k: TipKind| shown.iter().position(|(_, s)| *s == k);
    if let Some(explore) = position(TipKind::ExploreResults) {
        match position(TipKind::OptimizeQuery) {
            Some(optimize) if optimize < explore => {}
            _ => violation("optimize-before-explore", "③ without an earlier ②".into()),
        }
    }

    let expected = expected_tips(events);
    for kind in TipKind::ALL {
        let actual = shown.iter().find(|(_, k)| *k == kind).map(|(t, _)| *t);
        let want = expected.get(&kind).copied();
        if actual != want {
            let rule = match kind {
                TipKind::ClarifyNeed => "clarify-on-start",
                TipKind::OptimizeQuery => "optimize-on-first-query",
                TipKind::ExploreResults => "explore-iff-no-early-click",
                TipKind::CompareResults => "compare-iff-return-after-click",
            };
            violation(rule, format!("expected {want:?}, got {actual:?}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{QuerySource, SessionId};

    fn ev(t: u64, kind: EventKind) -> InteractionEvent {
        InteractionEvent::new(SessionId::new("s"), t, kind)
    }

    fn stream() -> Vec<InteractionEvent> {
        vec![
            ev(
                0,
                EventKind::SessionStart {
                    condition: Condition::Companion,
                    topic: "x".into(),
                },
            ),
            ev(
                1000,
                EventKind::QuerySubmitted {
                    query: "q".into(),
                    source: QuerySource::Typed,
                },
            ),
            ev(21_000, EventKind::Heartbeat),
        ]
    }

    #[test]
    fn correct_sequence_passes() {
        let shown = [
            (0, TipKind::ClarifyNeed),
            (1000, TipKind::OptimizeQuery),
            (21_000, TipKind::ExploreResults),
        ];
        assert!(check_session(&stream(), &shown).is_empty());
    }

    #[test]
    fn duplicate_and_missing_tips_are_reported() {
        let shown = [
            (0, TipKind::ClarifyNeed),
            (0, TipKind::ClarifyNeed),
            (1000, TipKind::OptimizeQuery),
        ];
        let rules: Vec<_> = check_session(&stream(), &shown)
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert!(rules.contains(&"at-most-once"));
        assert!(rules.contains(&"explore-iff-no-early-click"));
    }

    #[test]
    fn tips_in_baseline_are_reported() {
        let mut events = stream();
        events[0].kind = EventKind::SessionStart {
            condition: Condition::TenBlueLinks,
            topic: "x".into(),
        };
        let rules: Vec<_> = check_session(&events, &[(0, TipKind::ClarifyNeed)])
            .into_iter()
            .map(|v| v.rule)
            .collect();
        assert!(rules.contains(&"baseline-nullity"));
    }
}

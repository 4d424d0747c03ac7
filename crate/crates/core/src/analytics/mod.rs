//! Study analytics: per-session metrics, accuracy by topic and condition,
//! tip engagement, and the three hypothesis tests.
//!
//! Counting rules:
//! * `queries_issued` counts every `QuerySubmitted`, typed or from a
//!   suggestion.
//! * `results_viewed` counts every `ResultClicked`, so repeat visits to one
//!   document count again. `unique_results_viewed` is reported alongside.
//! * A session without an answer has unknown correctness and is left out
//!   of accuracy denominators.
//! * Tip engagement reads "shown / companion sessions" and "opened / shown".
//!   The number of sessions whose behaviour made a tip due ("eligible") is
//!   kept in the structured report.

mod render;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::TipKind;
use crate::event::{AnswerLabel, Condition, EventKind};
use crate::invariants::tip_schedule;
use crate::store::SessionRecord;
use crate::tasks::TaskSet;

pub use render::render_text;
pub use stats::{chi_square_test, mann_whitney_u, mean_sd, StatsError, StatsResult, STUDY_ALPHA};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("no task definition for topic `{0}`")]
    UnknownTopic(String),
    #[error("insufficient data for {hypothesis}: {reason}")]
    InsufficientData {
        hypothesis: &'static str,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub condition: Condition,
    pub topic: String,
    pub queries_issued: u32,
    pub results_viewed: u32,
    pub unique_results_viewed: u32,
    pub answer: Option<AnswerLabel>,
    /// `None` when the session has no answer.
    pub correct: Option<bool>,
    pub tips_shown: BTreeSet<TipKind>,
    pub tips_expanded: BTreeSet<TipKind>,
    /// Tips whose trigger condition the session's behaviour met.
    pub tips_eligible: BTreeSet<TipKind>,
    pub suggestions_clicked: u32,
}

pub fn session_metrics(
    record: &SessionRecord,
    tasks: &TaskSet,
) -> Result<SessionMetrics, AnalyticsError> {
    let task = tasks
        .get(&record.topic)
        .ok_or_else(|| AnalyticsError::UnknownTopic(record.topic.clone()))?;
    let mut m = SessionMetrics {
        session_id: record.session_id.to_string(),
        condition: record.condition,
        topic: record.topic.clone(),
        queries_issued: 0,
        results_viewed: 0,
        unique_results_viewed: 0,
        answer: record.answer,
        correct: record.answer.map(|a| a == task.ground_truth),
        tips_shown: BTreeSet::new(),
        tips_expanded: BTreeSet::new(),
        tips_eligible: tip_schedule(&record.events).into_keys().collect(),
        suggestions_clicked: 0,
    };
    let mut docs = BTreeSet::new();
    for event in &record.events {
        match &event.kind {
            EventKind::QuerySubmitted { .. } => m.queries_issued += 1,
            EventKind::ResultClicked { doc_id, .. } => {
                m.results_viewed += 1;
                docs.insert(doc_id.as_str());
            }
            EventKind::TipShown { tip } => {
                m.tips_shown.insert(*tip);
            }
            EventKind::TipExpanded { tip } => {
                m.tips_expanded.insert(*tip);
            }
            EventKind::SuggestionClicked { .. } => m.suggestions_clicked += 1,
            _ => {}
        }
    }
    m.unique_results_viewed = docs.len() as u32;
    // An expansion only counts for a tip that was on screen.
    m.tips_expanded.retain(|k| m.tips_shown.contains(k));
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub condition: Condition,
    /// Topic id, or `None` for the all-topics column.
    pub topic: Option<String>,
    pub correct: u32,
    pub answered: u32,
    /// Percentage rounded half-up to one decimal.
    pub percent: Option<f64>,
}

/// `correct / answered` in percent, rounded half-up to one decimal using
/// integer arithmetic.
pub fn percent_one_decimal(correct: u32, answered: u32) -> Option<f64> {
    if answered == 0 {
        return None;
    }
    let (c, n) = (correct as u64, answered as u64);
    let tenths = (2 * 1000 * c + n) / (2 * n);
    Some(tenths as f64 / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Summary {
    fn of(values: impl IntoIterator<Item = u32>) -> Self {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let (mean, sd) = mean_sd(&values);
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourSummary {
    pub condition: Condition,
    pub sessions: u32,
    pub queries_issued: Summary,
    pub results_viewed: Summary,
    pub unique_results_viewed: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipEngagement {
    pub kind: TipKind,
    pub label: String,
    /// Companion sessions.
    pub sessions: u32,
    pub eligible: u32,
    pub shown: u32,
    pub opened: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionUptake {
    /// Companion sessions that clicked at least one suggestion.
    pub users_clicking: u32,
    /// Companion sessions that opened the optimize-query tip.
    pub optimize_openers: u32,
    /// Of those, sessions that clicked at least one suggestion.
    pub optimize_openers_clicking: u32,
    /// Number of suggestion clicks -> sessions with that many (clicks >= 1).
    pub clicks_distribution: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub id: String,
    pub outcome: String,
    pub result: StatsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub alpha: f64,
    pub sessions: u32,
    pub topics: Vec<String>,
    pub accuracy: Vec<AccuracyCell>,
    pub behaviour: Vec<BehaviourSummary>,
    pub tip_engagement: Vec<TipEngagement>,
    pub suggestion_uptake: SuggestionUptake,
    pub hypotheses: Vec<HypothesisResult>,
}

impl StudyReport {
    pub fn accuracy_cell(
        &self,
        condition: Condition,
        topic: Option<&str>,
    ) -> Option<&AccuracyCell> {
        self.accuracy
            .iter()
            .find(|c| c.condition == condition && c.topic.as_deref() == topic)
    }

    pub fn hypothesis(&self, id: &str) -> Option<&StatsResult> {
        self.hypotheses
            .iter()
            .find(|h| h.id == id)
            .map(|h| &h.result)
    }

    pub fn behaviour_of(&self, condition: Condition) -> Option<&BehaviourSummary> {
        self.behaviour.iter().find(|b| b.condition == condition)
    }
}

/// Aggregates sessions into the study report. Pure in its inputs.
pub fn study_report(
    sessions: &[SessionRecord],
    tasks: &TaskSet,
    alpha: f64,
) -> Result<StudyReport, AnalyticsError> {
    let metrics = sessions
        .iter()
        .map(|s| session_metrics(s, tasks))
        .collect::<Result<Vec<_>, _>>()?;
    report_from_metrics(&metrics, tasks, alpha)
}

pub fn report_from_metrics(
    metrics: &[SessionMetrics],
    tasks: &TaskSet,
    alpha: f64,
) -> Result<StudyReport, AnalyticsError> {
    let by_condition = |c: Condition| metrics.iter().filter(move |m| m.condition == c);
    let topics: Vec<String> = tasks.topics().map(str::to_string).collect();

    let mut accuracy = Vec::new();
    for condition in Condition::ALL {
        let columns = topics.iter().map(Some).chain(std::iter::once(None));
        for topic in columns {
            let (mut correct, mut answered) = (0, 0);
            for m in by_condition(condition).filter(|m| topic.is_none_or(|t| &m.topic == t)) {
                if let Some(ok) = m.correct {
                    answered += 1;
                    correct += u32::from(ok);
                }
            }
            accuracy.push(AccuracyCell {
                condition,
                topic: topic.cloned(),
                correct,
                answered,
                percent: percent_one_decimal(correct, answered),
            });
        }
    }

    let behaviour = Condition::ALL
        .into_iter()
        .map(|c| BehaviourSummary {
            condition: c,
            sessions: by_condition(c).count() as u32,
            queries_issued: Summary::of(by_condition(c).map(|m| m.queries_issued)),
            results_viewed: Summary::of(by_condition(c).map(|m| m.results_viewed)),
            unique_results_viewed: Summary::of(by_condition(c).map(|m| m.unique_results_viewed)),
        })
        .collect();

    let companion: Vec<&SessionMetrics> = by_condition(Condition::Companion).collect();
    let tip_engagement = TipKind::ALL
        .into_iter()
        .map(|kind| TipEngagement {
            kind,
            label: kind.label().to_string(),
            sessions: companion.len() as u32,
            eligible: companion
                .iter()
                .filter(|m| m.tips_eligible.contains(&kind))
                .count() as u32,
            shown: companion
                .iter()
                .filter(|m| m.tips_shown.contains(&kind))
                .count() as u32,
            opened: companion
                .iter()
                .filter(|m| m.tips_expanded.contains(&kind))
                .count() as u32,
        })
        .collect();

    let mut suggestion_uptake = SuggestionUptake {
        users_clicking: 0,
        optimize_openers: 0,
        optimize_openers_clicking: 0,
        clicks_distribution: BTreeMap::new(),
    };
    for m in &companion {
        if m.suggestions_clicked > 0 {
            suggestion_uptake.users_clicking += 1;
            *suggestion_uptake
                .clicks_distribution
                .entry(m.suggestions_clicked)
                .or_default() += 1;
        }
        if m.tips_expanded.contains(&TipKind::OptimizeQuery) {
            suggestion_uptake.optimize_openers += 1;
            if m.suggestions_clicked > 0 {
                suggestion_uptake.optimize_openers_clicking += 1;
            }
        }
    }

    let hypotheses = vec![
        test_accuracy(metrics, alpha)?,
        test_counts(metrics, "H2", "results viewed", |m| m.results_viewed, alpha)?,
        test_counts(metrics, "H3", "queries issued", |m| m.queries_issued, alpha)?,
    ];

    Ok(StudyReport {
        alpha,
        sessions: metrics.len() as u32,
        topics,
        accuracy,
        behaviour,
        tip_engagement,
        suggestion_uptake,
        hypotheses,
    })
}

fn test_accuracy(
    metrics: &[SessionMetrics],
    alpha: f64,
) -> Result<HypothesisResult, AnalyticsError> {
    let mut table = [[0u64; 2]; 2];
    for m in metrics {
        if let Some(ok) = m.correct {
            let row = usize::from(m.condition == Condition::TenBlueLinks);
            table[row][usize::from(!ok)] += 1;
        }
    }
    let result = chi_square_test(table, alpha).map_err(|e| AnalyticsError::InsufficientData {
        hypothesis: "H1",
        reason: format!("{e} (companion {:?}, baseline {:?})", table[0], table[1]),
    })?;
    Ok(HypothesisResult {
        id: "H1".into(),
        outcome: "accuracy".into(),
        result,
    })
}

fn test_counts(
    metrics: &[SessionMetrics],
    id: &'static str,
    outcome: &str,
    value: impl Fn(&SessionMetrics) -> u32,
    alpha: f64,
) -> Result<HypothesisResult, AnalyticsError> {
    let sample = |c: Condition| -> Vec<f64> {
        metrics
            .iter()
            .filter(|m| m.condition == c)
            .map(|m| f64::from(value(m)))
            .collect()
    };
    let result = mann_whitney_u(
        &sample(Condition::Companion),
        &sample(Condition::TenBlueLinks),
        alpha,
    )
    .map_err(|_| AnalyticsError::InsufficientData {
        hypothesis: id,
        reason: "both conditions need at least one session".into(),
    })?;
    Ok(HypothesisResult {
        id: id.into(),
        outcome: outcome.into(),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{InteractionEvent, QuerySource, SessionId};
    use chrono::Utc;

    fn record(condition: Condition, topic: &str, kinds: Vec<(u64, EventKind)>) -> SessionRecord {
        let id = SessionId::new(format!("{condition}-{topic}-{}", kinds.len()));
        let mut events = vec![InteractionEvent::new(
            id.clone(),
            0,
            EventKind::SessionStart {
                condition,
                topic: topic.into(),
            },
        )];
        let mut answer = None;
        for (t, kind) in kinds {
            if let EventKind::AnswerSubmitted { answer: a } = kind {
                answer = Some(a);
            }
            events.push(InteractionEvent::new(id.clone(), t, kind));
        }
        SessionRecord {
            session_id: id,
            condition,
            topic: topic.into(),
            assigned_at: Utc::now(),
            answer,
            events,
        }
    }

    fn query(source: QuerySource) -> EventKind {
        EventKind::QuerySubmitted {
            query: "q".into(),
            source,
        }
    }

    fn click(doc: &str) -> EventKind {
        EventKind::ResultClicked {
            rank: 1,
            doc_id: doc.into(),
        }
    }

    fn answer(a: AnswerLabel) -> EventKind {
        EventKind::AnswerSubmitted { answer: a }
    }

    #[test]
    fn counts_queries_clicks_and_correctness() {
        // probiotics ground truth is not_helpful in the bundled tasks.
        let r = record(
            Condition::Companion,
            "probiotics",
            vec![
                (1000, query(QuerySource::Typed)),
                (2000, query(QuerySource::Typed)),
                (3000, click("d14")),
                (9000, answer(AnswerLabel::NotHelpful)),
            ],
        );
        let m = session_metrics(&r, &TaskSet::builtin()).unwrap();
        assert_eq!(m.queries_issued, 2);
        assert_eq!(m.results_viewed, 1);
        assert_eq!(m.correct, Some(true));
    }

    #[test]
    fn unanswered_session_has_unknown_correctness() {
        let r = record(
            Condition::Companion,
            "probiotics",
            vec![(1000, query(QuerySource::Typed))],
        );
        let m = session_metrics(&r, &TaskSet::builtin()).unwrap();
        assert_eq!(m.correct, None);
    }

    #[test]
    fn suggestion_click_and_its_query_both_count() {
        let r = record(
            Condition::Companion,
            "probiotics",
            vec![
                (1000, query(QuerySource::Typed)),
                (
                    1000,
                    EventKind::TipShown {
                        tip: TipKind::OptimizeQuery,
                    },
                ),
                (
                    4000,
                    EventKind::SuggestionClicked {
                        tip: TipKind::OptimizeQuery,
                        index: 0,
                    },
                ),
                (4000, query(QuerySource::Suggestion)),
            ],
        );
        let m = session_metrics(&r, &TaskSet::builtin()).unwrap();
        assert_eq!(m.suggestions_clicked, 1);
        assert_eq!(m.queries_issued, 2);
    }

    #[test]
    fn repeat_clicks_count_but_unique_is_reported() {
        let r = record(
            Condition::TenBlueLinks,
            "caffeine",
            vec![
                (1000, query(QuerySource::Typed)),
                (2000, click("d8")),
                (9000, click("d8")),
            ],
        );
        let m = session_metrics(&r, &TaskSet::builtin()).unwrap();
        assert_eq!(m.results_viewed, 2);
        assert_eq!(m.unique_results_viewed, 1);
    }

    #[test]
    fn unknown_topic() {
        let r = record(Condition::Companion, "nope", vec![]);
        assert_eq!(
            session_metrics(&r, &TaskSet::builtin()),
            Err(AnalyticsError::UnknownTopic("nope".into()))
        );
    }

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent_one_decimal(10, 13), Some(76.9));
        assert_eq!(percent_one_decimal(1, 8), Some(12.5));
        assert_eq!(percent_one_decimal(1, 16), Some(6.3)); // 6.25
        assert_eq!(percent_one_decimal(54, 74), Some(73.0));
        assert_eq!(percent_one_decimal(71, 97), Some(73.2));
        assert_eq!(percent_one_decimal(0, 0), None);
    }

    #[test]
    fn identical_groups_are_not_significant() {
        let mut sessions = Vec::new();
        for condition in Condition::ALL {
            for (i, n) in [1, 2, 2, 3].into_iter().enumerate() {
                let mut kinds: Vec<(u64, EventKind)> =
                    (0..n).map(|j| (1000 * (j + 1), click("d1"))).collect();
                let label = if i % 2 == 0 {
                    AnswerLabel::Helpful
                } else {
                    AnswerLabel::NotHelpful
                };
                kinds.push((10_000, answer(label)));
                sessions.push(record(condition, "melatonin", kinds));
            }
        }
        let report = study_report(&sessions, &TaskSet::builtin(), STUDY_ALPHA).unwrap();
        let h2 = report.hypothesis("H2").unwrap();
        assert!((h2.p_value - 1.0).abs() < 1e-12);
        assert!(!h2.significant);
        assert_eq!(report.alpha, STUDY_ALPHA);
    }

    #[test]
    fn empty_input_is_insufficient() {
        assert!(matches!(
            study_report(&[], &TaskSet::builtin(), STUDY_ALPHA),
            Err(AnalyticsError::InsufficientData {
                hypothesis: "H1",
                ..
            })
        ));
    }
}

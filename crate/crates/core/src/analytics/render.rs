use std::fmt::Write;

use super::{StudyReport, Summary};
use crate::event::Condition;

/// Left-aligned columns separated by two spaces, trailing blanks trimmed.
fn table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            let pad = widths[c] - cell.chars().count();
            line.extend(std::iter::repeat_n(' ', pad));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn m_sd(s: &Summary) -> String {
    match (s.mean, s.sd) {
        (Some(m), Some(sd)) => format!("{m:.2} ({sd:.2})"),
        (Some(m), None) => format!("{m:.2}"),
        _ => "-".into(),
    }
}

/// Plain-text report: accuracy by topic, behaviour, tip engagement and the
/// hypothesis tests.
pub fn render_text(report: &StudyReport) -> String {
    let mut out = String::new();

    out.push_str("Search outcome accuracy (%)\n");
    let mut rows = vec![std::iter::once(String::new())
        .chain(report.topics.iter().cloned())
        .chain(std::iter::once("overall".to_string()))
        .collect::<Vec<_>>()];
    for condition in Condition::ALL {
        let mut row = vec![condition.label().to_string()];
        let columns = report
            .topics
            .iter()
            .map(|t| Some(t.as_str()))
            .chain(std::iter::once(None));
        for topic in columns {
            let cell = report
                .accuracy_cell(condition, topic)
                .and_then(|c| c.percent)
                .map(|p| format!("{p:.1}"))
                .unwrap_or_else(|| "-".into());
            row.push(cell);
        }
        rows.push(row);
    }
    out.push_str(&table(&rows));

    out.push_str("\nSearch behaviour, M (SD)\n");
    let mut rows = vec![vec![
        "condition".to_string(),
        "sessions".into(),
        "queries".into(),
        "results viewed".into(),
        "unique results".into(),
    ]];
    for b in &report.behaviour {
        rows.push(vec![
            b.condition.label().to_string(),
            b.sessions.to_string(),
            m_sd(&b.queries_issued),
            m_sd(&b.results_viewed),
            m_sd(&b.unique_results_viewed),
        ]);
    }
    out.push_str(&table(&rows));

    out.push_str("\nSearch tip engagement\n");
    let mut rows = vec![vec![
        "Search tip".to_string(),
        "Shown".into(),
        "Opened".into(),
    ]];
    for t in &report.tip_engagement {
        rows.push(vec![
            t.label.clone(),
            format!("{}/{}", t.shown, t.sessions),
            format!("{}/{}", t.opened, t.shown),
        ]);
    }
    out.push_str(&table(&rows));

    let u = &report.suggestion_uptake;
    let _ = writeln!(
        out,
        "\nSuggestion uptake: {} of {} sessions that opened the optimize-query tip clicked a suggestion; {} sessions clicked at least one",
        u.optimize_openers_clicking, u.optimize_openers, u.users_clicking
    );
    if !u.clicks_distribution.is_empty() {
        let dist: Vec<String> = u
            .clicks_distribution
            .iter()
            .map(|(clicks, users)| format!("{clicks} click(s): {users}"))
            .collect();
        let _ = writeln!(out, "Suggestion clicks per session: {}", dist.join(", "));
    }

    let _ = writeln!(out, "\nHypothesis tests (alpha = {})", report.alpha);
    let mut rows = vec![vec![
        "hypothesis".to_string(),
        "outcome".into(),
        "test".into(),
        "statistic".into(),
        "p".into(),
        "significant".into(),
    ]];
    for h in &report.hypotheses {
        rows.push(vec![
            h.id.clone(),
            h.outcome.clone(),
            h.result.test.clone(),
            format!("{:.4}", h.result.statistic),
            format!("{:.4e}", h.result.p_value),
            if h.result.significant { "yes" } else { "no" }.into(),
        ]);
    }
    out.push_str(&table(&rows));
    out
}

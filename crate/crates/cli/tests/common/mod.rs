//! Scripted study log with known per-cell counts.
//!
//! Every session is played through the in-process service, so the log is a
//! genuine service log rather than hand-written JSON. Counts per cell:
//!
//! | condition     | topic           | correct / sessions |
//! |---------------|-----------------|--------------------|
//! | companion     | antioxidants    | 10 / 13            |
//! | companion     | benzodiazepines |  9 / 10            |
//! | companion     | caffeine        | 10 / 11            |
//! | companion     | melatonin       | 12 / 13            |
//! | companion     | probiotics      |  7 / 17            |
//! | companion     | traction        |  6 / 10            |
//! | 10-blue-links | antioxidants    | 15 / 21            |
//! | 10-blue-links | benzodiazepines | 12 / 12            |
//! | 10-blue-links | caffeine        | 12 / 12            |
//! | 10-blue-links | melatonin       | 13 / 13            |
//! | 10-blue-links | probiotics      |  7 / 18            |
//! | 10-blue-links | traction        | 12 / 21            |
//!
//! Companion tips: 74 shown / 48 opened, 73 / 43, 47 / 23, 69 / 46, with 17
//! of the 43 optimize-tip openers clicking suggestions (11 once, 3 twice, 2
//! three times, 1 four times). Query and click counts per session are drawn
//! from fixed multisets whose means and SDs are 1.96 (1.21) queries and 2.64
//! (1.52) clicks for the companion, 1.12 (0.41) and 1.30 (1.10) for the
//! baseline.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use companion_core::config::AssignmentMode;
use companion_core::search::Index;
use companion_core::service::{
    AnswerRequest, ClickRequest, CompanionService, CreateSessionRequest, QueryRequest,
    ServiceParts, TimedRequest, TipAction, TipInteractionRequest,
};
use companion_core::store::{EventStore, WallClock};
use companion_core::tasks::TaskSet;
use companion_core::{Condition, QuerySource, SessionId, TipCatalog, TipKind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
pub const STUDY_FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../fixtures/study_tables.jsonl"
);

const TOPICS: [&str; 6] = [
    "antioxidants",
    "benzodiazepines",
    "caffeine",
    "melatonin",
    "probiotics",
    "traction",
];
const COMPANION_CELLS: [(u32, u32); 6] = [(10, 13), (9, 10), (10, 11), (12, 13), (7, 17), (6, 10)];
const BASELINE_CELLS: [(u32, u32); 6] = [(15, 21), (12, 12), (12, 12), (13, 13), (7, 18), (12, 21)];

/// (value, how many sessions)
const COMPANION_QUERIES: [(usize, usize); 6] = [(1, 35), (2, 16), (3, 14), (4, 5), (5, 2), (6, 1)];
const COMPANION_CLICKS: [(usize, usize); 6] = [(1, 13), (2, 19), (3, 16), (4, 12), (5, 6), (6, 3)];
const BASELINE_QUERIES: [(usize, usize); 3] = [(1, 88), (2, 6), (3, 3)];
const BASELINE_CLICKS: [(usize, usize); 6] = [(0, 27), (1, 29), (2, 31), (3, 6), (4, 3), (5, 1)];
const SUGGESTION_CLICKS: [(usize, usize); 4] = [(4, 1), (3, 2), (2, 3), (1, 11)];

#[derive(Debug, Clone, Default)]
struct Script {
    condition: Option<Condition>,
    topic: &'static str,
    correct: bool,
    queries: usize,
    clicks: usize,
    /// Sit on the results past the 20 s mark before the first click.
    linger: bool,
    open: [bool; 4],
    suggestion_clicks: usize,
}

fn expand(counts: &[(usize, usize)]) -> Vec<usize> {
    counts
        .iter()
        .flat_map(|&(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

fn cells(table: &[(u32, u32); 6]) -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();
    for (topic, &(correct, total)) in TOPICS.iter().zip(table) {
        for i in 0..total {
            out.push((*topic, i < correct));
        }
    }
    out
}

fn companion_scripts(rng: &mut ChaCha8Rng) -> Vec<Script> {
    let mut outcomes = cells(&COMPANION_CELLS);
    outcomes.shuffle(rng);
    let mut scripts: Vec<Script> = outcomes
        .into_iter()
        .map(|(topic, correct)| Script {
            condition: Some(Condition::Companion),
            topic,
            correct,
            ..Default::default()
        })
        .collect();
    assert_eq!(scripts.len(), 74);

    // Session 0 never searches. 1..=4 linger and never click. 5..=47 linger,
    // then click and come back. 48..=73 click within 20 s.
    let mut queries = expand(&COMPANION_QUERIES);
    queries.shuffle(rng);
    let mut clicks = expand(&COMPANION_CLICKS);
    clicks.shuffle(rng);
    for (i, s) in scripts.iter_mut().enumerate() {
        s.queries = if i == 0 { 0 } else { queries[i - 1] };
        s.clicks = if i < 5 { 0 } else { clicks[i - 5] };
        s.linger = (1..=47).contains(&i);
    }

    // Suggestion users need one query beyond their suggestion clicks.
    let mut by_queries: Vec<usize> = (1..74).collect();
    by_queries.sort_by_key(|&i| std::cmp::Reverse(scripts[i].queries));
    let suggesters = &by_queries[..17];
    for (&i, n) in suggesters.iter().zip(expand(&SUGGESTION_CLICKS)) {
        assert!(scripts[i].queries > n);
        scripts[i].suggestion_clicks = n;
        scripts[i].open[1] = true;
    }
    let mut others: Vec<usize> = by_queries[17..].to_vec();
    others.shuffle(rng);
    for &i in &others[..43 - 17] {
        scripts[i].open[1] = true;
    }

    let mut pick = |eligible: Vec<usize>, n: usize, tip: usize, scripts: &mut Vec<Script>| {
        let mut eligible = eligible;
        eligible.shuffle(rng);
        for &i in &eligible[..n] {
            scripts[i].open[tip] = true;
        }
    };
    pick((0..74).collect(), 48, 0, &mut scripts);
    pick((1..=47).collect(), 23, 2, &mut scripts);
    pick((5..74).collect(), 46, 3, &mut scripts);
    scripts.shuffle(rng);
    scripts
}

fn baseline_scripts(rng: &mut ChaCha8Rng) -> Vec<Script> {
    let mut outcomes = cells(&BASELINE_CELLS);
    outcomes.shuffle(rng);
    let mut queries = expand(&BASELINE_QUERIES);
    queries.shuffle(rng);
    let mut clicks = expand(&BASELINE_CLICKS);
    clicks.shuffle(rng);
    assert_eq!((outcomes.len(), queries.len(), clicks.len()), (97, 97, 97));
    outcomes
        .into_iter()
        .zip(queries.into_iter().zip(clicks))
        .map(|((topic, correct), (queries, clicks))| Script {
            condition: Some(Condition::TenBlueLinks),
            topic,
            correct,
            queries,
            clicks,
            linger: false,
            ..Default::default()
        })
        .collect()
}

const MODIFIERS: [&str; 5] = [
    "evidence",
    "systematic review",
    "clinical trial",
    "side effects",
    "research study",
];

fn play(svc: &CompanionService, s: &Script) {
    let created = svc
        .create_session(CreateSessionRequest {
            topic: Some(s.topic.into()),
            condition: s.condition,
        })
        .unwrap();
    let id: &SessionId = &created.session_id;
    let task = svc.tasks().get(s.topic).unwrap();
    let tip = |kind: TipKind, action: TipAction, t_ms: u64| {
        svc.tip_interaction(id, TipInteractionRequest { kind, action, t_ms })
            .unwrap();
    };
    if s.open[0] {
        tip(TipKind::ClarifyNeed, TipAction::Expanded, 2000);
    }
    let answer = |t_ms: u64| {
        let answer = if s.correct {
            task.ground_truth
        } else {
            task.ground_truth.flipped()
        };
        svc.submit_answer(id, AnswerRequest { answer, t_ms })
            .unwrap();
    };
    if s.queries == 0 {
        answer(30_000);
        return;
    }

    let base = s.topic.to_string();
    let mut t = 5000;
    let mut page = svc
        .submit_query(
            id,
            QueryRequest {
                query: format!("{base} evidence"),
                source: QuerySource::Typed,
                t_ms: t,
            },
        )
        .unwrap()
        .results;
    if s.open[1] {
        tip(TipKind::OptimizeQuery, TipAction::Expanded, 7000);
    }
    if s.linger {
        for hb in [10_000, 15_000, 20_000, 25_000] {
            svc.heartbeat(id, TimedRequest { t_ms: hb }).unwrap();
        }
        if s.open[2] {
            tip(TipKind::ExploreResults, TipAction::Expanded, 27_000);
        }
        t = 30_000;
    } else {
        t = 10_000;
    }

    // Spread the clicks over the result pages, first page first.
    let per_page: Vec<usize> = (0..s.queries)
        .map(|j| s.clicks / s.queries + usize::from(j < s.clicks % s.queries))
        .collect();
    let mut returned = false;
    for (j, &n_clicks) in per_page.iter().enumerate() {
        if j > 0 {
            t += 4000;
            let optimize = svc
                .catalog()
                .tip_for(s.topic, TipKind::OptimizeQuery)
                .unwrap();
            let (query, source) = if j <= s.suggestion_clicks {
                let index = (j - 1) % optimize.suggestions.len();
                tip(
                    TipKind::OptimizeQuery,
                    TipAction::SuggestionClicked { index },
                    t,
                );
                (
                    optimize.suggestions[index].query.clone(),
                    QuerySource::Suggestion,
                )
            } else {
                (
                    format!("{base} {}", MODIFIERS[j % MODIFIERS.len()]),
                    QuerySource::Typed,
                )
            };
            page = svc
                .submit_query(
                    id,
                    QueryRequest {
                        query,
                        source,
                        t_ms: t,
                    },
                )
                .unwrap()
                .results;
        }
        for k in 0..n_clicks {
            let r = &page[k % page.len()];
            t += 3000;
            svc.click_result(
                id,
                ClickRequest {
                    rank: r.rank,
                    doc_id: r.doc_id.clone(),
                    t_ms: t,
                },
            )
            .unwrap();
            t += 6000;
            svc.return_to_serp(id, TimedRequest { t_ms: t }).unwrap();
            if !returned && s.open[3] {
                t += 1000;
                tip(TipKind::CompareResults, TipAction::Expanded, t);
            }
            returned = true;
        }
    }
    answer(t + 5000);
}

/// Writes the study log to `path` (which must not exist yet).
pub fn write_study_fixture(path: &Path) {
    let clock = WallClock::Fixed("2025-06-02T09:00:00Z".parse().unwrap());
    let svc = CompanionService::new(ServiceParts {
        catalog: TipCatalog::load(format!("{DATA}/catalog.toml")).unwrap(),
        tasks: TaskSet::load(format!("{DATA}/tasks.toml")).unwrap(),
        backend: Arc::new(
            Index::ingest_corpus(format!("{DATA}/corpus.jsonl"), Default::default()).unwrap(),
        ),
        store: EventStore::open(path).unwrap().with_clock(clock),
        page_size: 10,
        heartbeat_ms: 5000,
        assignment: AssignmentMode::Alternating,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut scripts = companion_scripts(&mut rng);
    scripts.extend(baseline_scripts(&mut rng));
    scripts.shuffle(&mut rng);
    for s in &scripts {
        play(&svc, s);
    }
}

//! Simulated users.
//!
//! A policy is played against a [`StudyTarget`] (the in-process service or
//! a live HTTP server) in simulated time: the driver fabricates every
//! `t_ms` from sampled delays and sends a heartbeat every `heartbeat_ms`
//! while the simulated user sits on the result page. Nothing sleeps unless
//! [`Pace::RealTime`] is chosen.

mod policy;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use policy::{AnswerRule, DelayRange, Delays, PolicySet, UserPolicy};

use crate::catalog::{SearchTip, TipKind};
use crate::event::{AnswerLabel, Condition, EventKind, InteractionEvent, QuerySource, SessionId};
use crate::service::{
    AnswerAck, AnswerRequest, ClickRequest, ClickResponse, CompanionService, CreateSessionRequest,
    QueryRequest, QueryResponse, ServiceError, SessionCreated, TimedRequest, TipAction,
    TipInteractionRequest, TipsResponse,
};
use crate::tasks::TaskDefinition;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("policy `{name}` is invalid: {reason}")]
    InvalidPolicy { name: String, reason: String },
    #[error("policy file: {0}")]
    PolicyFile(String),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("service rejected a simulated action: {0}")]
    Service(#[from] ServiceError),
}

/// Anything that exposes the session endpoints.
pub trait StudyTarget {
    fn create_session(&self, req: CreateSessionRequest) -> Result<SessionCreated, ServiceError>;
    fn submit_query(
        &self,
        id: &SessionId,
        req: QueryRequest,
    ) -> Result<QueryResponse, ServiceError>;
    fn click_result(
        &self,
        id: &SessionId,
        req: ClickRequest,
    ) -> Result<ClickResponse, ServiceError>;
    fn return_to_serp(
        &self,
        id: &SessionId,
        req: TimedRequest,
    ) -> Result<TipsResponse, ServiceError>;
    fn heartbeat(&self, id: &SessionId, req: TimedRequest) -> Result<TipsResponse, ServiceError>;
    fn tip_interaction(
        &self,
        id: &SessionId,
        req: TipInteractionRequest,
    ) -> Result<TipsResponse, ServiceError>;
    fn submit_answer(&self, id: &SessionId, req: AnswerRequest) -> Result<AnswerAck, ServiceError>;
}

impl StudyTarget for CompanionService {
    fn create_session(&self, req: CreateSessionRequest) -> Result<SessionCreated, ServiceError> {
        CompanionService::create_session(self, req)
    }
    fn submit_query(
        &self,
        id: &SessionId,
        req: QueryRequest,
    ) -> Result<QueryResponse, ServiceError> {
        CompanionService::submit_query(self, id, req)
    }
    fn click_result(
        &self,
        id: &SessionId,
        req: ClickRequest,
    ) -> Result<ClickResponse, ServiceError> {
        CompanionService::click_result(self, id, req)
    }
    fn return_to_serp(
        &self,
        id: &SessionId,
        req: TimedRequest,
    ) -> Result<TipsResponse, ServiceError> {
        CompanionService::return_to_serp(self, id, req)
    }
    fn heartbeat(&self, id: &SessionId, req: TimedRequest) -> Result<TipsResponse, ServiceError> {
        CompanionService::heartbeat(self, id, req)
    }
    fn tip_interaction(
        &self,
        id: &SessionId,
        req: TipInteractionRequest,
    ) -> Result<TipsResponse, ServiceError> {
        CompanionService::tip_interaction(self, id, req)
    }
    fn submit_answer(&self, id: &SessionId, req: AnswerRequest) -> Result<AnswerAck, ServiceError> {
        CompanionService::submit_answer(self, id, req)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Pace {
    #[default]
    Simulated,
    /// Sleep so that each request goes out at its `t_ms` after the session
    /// started. Meant for smoke-testing a live server.
    RealTime,
}

/// The client-side transcript of one session: every event the simulated
/// user caused, plus a `TipShown` for each tip it received, in the order
/// the service logs them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSession {
    pub session_id: SessionId,
    pub policy: String,
    pub condition: Condition,
    pub topic: String,
    pub answer: AnswerLabel,
    pub events: Vec<InteractionEvent>,
}

impl SimulatedSession {
    /// Tips received, with the `t_ms` of the response that carried them.
    pub fn tips_received(&self) -> Vec<(u64, TipKind)> {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::TipShown { tip } => Some((e.t_ms, tip)),
                _ => None,
            })
            .collect()
    }

    pub fn count(&self, name: &str) -> usize {
        self.events.iter().filter(|e| e.kind.name() == name).count()
    }
}

const STOPWORDS: &[&str] = &["do", "does", "people", "with", "the", "a", "an"];
const MODIFIERS: &[&str] = &[
    "evidence",
    "treatment effectiveness",
    "systematic review",
    "clinical trial",
    "randomized controlled trial",
    "side effects",
    "health benefits",
    "research study",
];

fn base_query(question: &str) -> String {
    question
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sample_count(rng: &mut impl Rng, weights: &[f64]) -> usize {
    WeightedIndex::new(weights)
        .expect("validated weights")
        .sample(rng)
        + 1
}

struct Driver<'a, T: StudyTarget + ?Sized> {
    target: &'a T,
    policy: &'a UserPolicy,
    rng: ChaCha8Rng,
    id: SessionId,
    heartbeat_ms: u64,
    pace: Pace,
    started: Instant,
    t: u64,
    /// Next heartbeat time while on the result page.
    next_heartbeat: Option<u64>,
    pending: VecDeque<SearchTip>,
    shown: Vec<SearchTip>,
    expanded: HashSet<TipKind>,
    events: Vec<InteractionEvent>,
}

impl<T: StudyTarget + ?Sized> Driver<'_, T> {
    fn pace(&self) {
        if self.pace == Pace::RealTime {
            let due = self.started + Duration::from_millis(self.t);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }

    fn log(&mut self, kind: EventKind) {
        self.events
            .push(InteractionEvent::new(self.id.clone(), self.t, kind));
    }

    fn receive(&mut self, tips: Vec<SearchTip>) {
        for tip in tips {
            self.log(EventKind::TipShown { tip: tip.kind });
            self.shown.push(tip.clone());
            self.pending.push_back(tip);
        }
    }

    /// Lets `ms` pass, heartbeating if on the result page.
    fn wait(&mut self, ms: u64) -> Result<(), ServiceError> {
        let until = self.t + ms;
        while let Some(hb) = self.next_heartbeat.filter(|hb| *hb <= until) {
            self.t = hb;
            self.pace();
            let r = self.target.heartbeat(&self.id, TimedRequest { t_ms: hb })?;
            self.log(EventKind::Heartbeat);
            self.receive(r.new_tips);
            self.next_heartbeat = Some(hb + self.heartbeat_ms);
        }
        self.t = until;
        Ok(())
    }

    fn on_serp(&mut self) {
        self.next_heartbeat = Some(self.t + self.heartbeat_ms);
    }

    fn expand(&mut self, kind: TipKind) -> Result<(), ServiceError> {
        self.pace();
        let req = TipInteractionRequest {
            kind,
            action: TipAction::Expanded,
            t_ms: self.t,
        };
        let r = self.target.tip_interaction(&self.id, req)?;
        self.log(EventKind::TipExpanded { tip: kind });
        self.expanded.insert(kind);
        self.receive(r.new_tips);
        Ok(())
    }

    /// Handles tips that arrived since the last action.
    fn attend_tips(&mut self) -> Result<(), ServiceError> {
        while let Some(tip) = self.pending.pop_front() {
            if self.rng.random_bool(self.policy.expand_probability) {
                self.expand(tip.kind)?;
                let read = self.policy.delays.tip_read_ms.sample(&mut self.rng);
                self.wait(read)?;
            }
        }
        Ok(())
    }

    fn query(&mut self, text: String, source: QuerySource) -> Result<QueryResponse, ServiceError> {
        self.pace();
        let req = QueryRequest {
            query: text.clone(),
            source,
            t_ms: self.t,
        };
        let mut r = self.target.submit_query(&self.id, req)?;
        self.log(EventKind::QuerySubmitted {
            query: text.trim().to_string(),
            source,
        });
        self.receive(std::mem::take(&mut r.new_tips));
        self.on_serp();
        Ok(r)
    }

    /// Picks a suggestion from a shown tip, logging the click. Opening the
    /// tip first if it is still collapsed.
    fn adopt_suggestion(&mut self) -> Result<Option<String>, ServiceError> {
        let candidates: Vec<SearchTip> = self
            .shown
            .iter()
            .filter(|t| !t.suggestions.is_empty())
            .cloned()
            .collect();
        let Some(tip) = candidates.choose(&mut self.rng).cloned() else {
            return Ok(None);
        };
        if !self.expanded.contains(&tip.kind) {
            self.expand(tip.kind)?;
        }
        let index = self.rng.random_range(0..tip.suggestions.len());
        self.pace();
        let req = TipInteractionRequest {
            kind: tip.kind,
            action: TipAction::SuggestionClicked { index },
            t_ms: self.t,
        };
        let r = self.target.tip_interaction(&self.id, req)?;
        self.log(EventKind::SuggestionClicked {
            tip: tip.kind,
            index,
        });
        self.receive(r.new_tips);
        Ok(Some(tip.suggestions[index].query.clone()))
    }

    fn click(&mut self, rank: u32, doc_id: String) -> Result<(), ServiceError> {
        self.pace();
        let req = ClickRequest {
            rank,
            doc_id: doc_id.clone(),
            t_ms: self.t,
        };
        let r = self.target.click_result(&self.id, req)?;
        self.log(EventKind::ResultClicked { rank, doc_id });
        self.next_heartbeat = None;
        self.receive(r.new_tips);
        Ok(())
    }

    fn go_back(&mut self) -> Result<(), ServiceError> {
        self.pace();
        let r = self
            .target
            .return_to_serp(&self.id, TimedRequest { t_ms: self.t })?;
        self.log(EventKind::ReturnedToSerp);
        self.on_serp();
        self.receive(r.new_tips);
        Ok(())
    }

    /// Picks distinct ranks, favouring the top of the page.
    fn pick_ranks(&mut self, n_results: usize) -> Vec<usize> {
        let wanted =
            sample_count(&mut self.rng, &self.policy.clicks_per_view_weights).min(n_results);
        let mut remaining: Vec<usize> = (0..n_results).collect();
        let mut picked = Vec::with_capacity(wanted);
        for _ in 0..wanted {
            let weights: Vec<f64> = remaining.iter().map(|i| 1.0 / (*i as f64 + 1.0)).collect();
            let k = WeightedIndex::new(&weights)
                .expect("positive weights")
                .sample(&mut self.rng);
            picked.push(remaining.remove(k));
        }
        picked
    }
}

/// Plays one session of `policy` on `task` and returns the client-side
/// transcript. The same `(policy, seed, condition, task)` always yields the
/// same stream of `t_ms` and events.
pub fn run_session<T: StudyTarget + ?Sized>(
    target: &T,
    policy: &UserPolicy,
    seed: u64,
    condition: Condition,
    task: &TaskDefinition,
    pace: Pace,
) -> Result<SimulatedSession, SimError> {
    policy.validate()?;
    let created = target.create_session(CreateSessionRequest {
        topic: Some(task.topic.clone()),
        condition: Some(condition),
    })?;
    let mut d = Driver {
        target,
        policy,
        rng: ChaCha8Rng::seed_from_u64(seed),
        id: created.session_id.clone(),
        heartbeat_ms: created.heartbeat_ms.max(1),
        pace,
        started: Instant::now(),
        t: 0,
        next_heartbeat: None,
        pending: VecDeque::new(),
        shown: Vec::new(),
        expanded: HashSet::new(),
        events: Vec::new(),
    };
    d.log(EventKind::SessionStart {
        condition: created.condition,
        topic: created.topic.clone(),
    });
    d.receive(created.tips);
    d.attend_tips()?;

    let base = base_query(&task.question);
    let n_queries = sample_count(&mut d.rng, &policy.query_weights);
    let delays = policy.delays;
    for qi in 0..n_queries {
        let delay = if qi == 0 {
            delays.first_query_ms.sample(&mut d.rng)
        } else {
            delays.serp_dwell_ms.sample(&mut d.rng)
        };
        d.wait(delay)?;
        let suggested = if d.rng.random_bool(policy.suggestion_probability) {
            d.adopt_suggestion()?
        } else {
            None
        };
        let (text, source) = match suggested {
            Some(q) => (q, QuerySource::Suggestion),
            None if qi == 0 => (base.clone(), QuerySource::Typed),
            None => {
                let modifier = MODIFIERS.choose(&mut d.rng).expect("non-empty");
                (format!("{base} {modifier}"), QuerySource::Typed)
            }
        };
        let page = d.query(text, source)?;
        d.attend_tips()?;

        if !page.results.is_empty() && d.rng.random_bool(policy.click_probability) {
            for i in d.pick_ranks(page.results.len()) {
                let dwell = delays.serp_dwell_ms.sample(&mut d.rng);
                d.wait(dwell)?;
                d.click(page.results[i].rank, page.results[i].doc_id.clone())?;
                d.attend_tips()?;
                let read = delays.doc_dwell_ms.sample(&mut d.rng);
                d.wait(read)?;
                d.go_back()?;
                d.attend_tips()?;
            }
        } else if qi + 1 == n_queries {
            let dwell = delays.serp_dwell_ms.sample(&mut d.rng);
            d.wait(dwell)?;
            d.attend_tips()?;
        }
    }

    let think = delays.answer_ms.sample(&mut d.rng);
    d.wait(think)?;
    d.attend_tips()?;
    let correct = match policy.answer {
        AnswerRule::FixedCorrect => true,
        AnswerRule::FixedWrong => false,
        AnswerRule::Bernoulli { p } => d.rng.random_bool(p),
    };
    let answer = if correct {
        task.ground_truth
    } else {
        task.ground_truth.flipped()
    };
    d.pace();
    target.submit_answer(&d.id, AnswerRequest { answer, t_ms: d.t })?;
    d.log(EventKind::AnswerSubmitted { answer });

    Ok(SimulatedSession {
        session_id: created.session_id,
        policy: policy.name.clone(),
        condition: created.condition,
        topic: created.topic,
        answer,
        events: d.events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionMix {
    /// Companion, baseline, companion, ... Exact split.
    Alternating,
    /// Fair coin per session from the batch seed.
    Random,
    Forced(Condition),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPolicy {
    pub policy: UserPolicy,
    pub weight: f64,
    /// Restricts the policy to sessions of one condition.
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyChoice {
    Weighted(Vec<WeightedPolicy>),
    /// A fresh [`UserPolicy::random`] per session.
    Randomized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub sessions: usize,
    pub seed: u64,
    pub mix: ConditionMix,
    pub policies: PolicyChoice,
    pub pace: Pace,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchSummary {
    pub sessions: Vec<SimulatedSession>,
    pub per_policy: BTreeMap<String, usize>,
    pub per_condition: BTreeMap<Condition, usize>,
}

/// Runs `spec.sessions` sessions one after another, with topics drawn
/// uniformly from `tasks`. Per-session seeds come from the batch seed, so a
/// batch is reproducible as a whole.
pub fn run_batch<T: StudyTarget + ?Sized>(
    target: &T,
    tasks: &[TaskDefinition],
    spec: &BatchSpec,
) -> Result<BatchSummary, SimError> {
    if tasks.is_empty() {
        return Err(SimError::InvalidBatch(
            "no tasks to draw topics from".into(),
        ));
    }
    if let PolicyChoice::Weighted(entries) = &spec.policies {
        for entry in entries {
            entry.policy.validate()?;
            if !(entry.weight.is_finite() && entry.weight >= 0.0) {
                return Err(SimError::InvalidBatch(format!(
                    "policy `{}` has weight {}",
                    entry.policy.name, entry.weight
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut summary = BatchSummary::default();
    for i in 0..spec.sessions {
        let condition = match spec.mix {
            ConditionMix::Alternating if i % 2 == 0 => Condition::Companion,
            ConditionMix::Alternating => Condition::TenBlueLinks,
            ConditionMix::Random if rng.random_bool(0.5) => Condition::Companion,
            ConditionMix::Random => Condition::TenBlueLinks,
            ConditionMix::Forced(c) => c,
        };
        let policy = match &spec.policies {
            PolicyChoice::Randomized => UserPolicy::random(&mut rng, format!("random-{i}")),
            PolicyChoice::Weighted(entries) => {
                let eligible: Vec<&WeightedPolicy> = entries
                    .iter()
                    .filter(|e| e.condition.is_none_or(|c| c == condition))
                    .collect();
                let weights: Vec<f64> = eligible.iter().map(|e| e.weight).collect();
                let dist = WeightedIndex::new(&weights).map_err(|_| {
                    SimError::InvalidBatch(format!(
                        "no policy with positive weight for {condition}"
                    ))
                })?;
                eligible[dist.sample(&mut rng)].policy.clone()
            }
        };
        let task = tasks.choose(&mut rng).expect("non-empty");
        let seed = rng.random();
        let session = run_session(target, &policy, seed, condition, task, spec.pace)?;
        let key = match spec.policies {
            PolicyChoice::Randomized => "random".to_string(),
            PolicyChoice::Weighted(_) => policy.name.clone(),
        };
        *summary.per_policy.entry(key).or_default() += 1;
        *summary.per_condition.entry(condition).or_default() += 1;
        summary.sessions.push(session);
    }
    Ok(summary)
}

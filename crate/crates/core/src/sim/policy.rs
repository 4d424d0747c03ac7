use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Inclusive uniform range of milliseconds, written `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u64; 2]", into = "[u64; 2]")]
pub struct DelayRange {
    pub lo: u64,
    pub hi: u64,
}

impl DelayRange {
    pub const fn fixed(ms: u64) -> Self {
        Self { lo: ms, hi: ms }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        rng.random_range(self.lo..=self.hi)
    }
}

impl TryFrom<[u64; 2]> for DelayRange {
    type Error = String;

    fn try_from([lo, hi]: [u64; 2]) -> Result<Self, String> {
        if lo > hi {
            return Err(format!("delay range [{lo}, {hi}] is reversed"));
        }
        Ok(Self { lo, hi })
    }
}

impl From<DelayRange> for [u64; 2] {
    fn from(d: DelayRange) -> Self {
        [d.lo, d.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delays {
    /// From session start to the first query.
    pub first_query_ms: DelayRange,
    /// Time on the result page before the next click, query or answer.
    pub serp_dwell_ms: DelayRange,
    /// Time on a document before going back.
    pub doc_dwell_ms: DelayRange,
    /// Time spent reading an expanded tip.
    pub tip_read_ms: DelayRange,
    /// Extra time before the final answer.
    pub answer_ms: DelayRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AnswerRule {
    FixedCorrect,
    FixedWrong,
    /// Correct with probability `p`.
    Bernoulli {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPolicy {
    pub name: String,
    /// Relative weights for issuing 1, 2, 3, ... queries.
    pub query_weights: Vec<f64>,
    /// Chance of clicking at least one result on a page of results.
    pub click_probability: f64,
    /// Relative weights for 1, 2, 3, ... clicks on a page, given a click.
    pub clicks_per_view_weights: Vec<f64>,
    /// Chance that a follow-up query comes from a shown tip's suggestions.
    pub suggestion_probability: f64,
    /// Chance of expanding each tip when it appears.
    pub expand_probability: f64,
    pub answer: AnswerRule,
    pub delays: Delays,
}

fn weighted_mean(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| (i + 1) as f64 * w)
        .sum::<f64>()
        / total
}

impl UserPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| SimError::InvalidPolicy {
            name: self.name.clone(),
            reason: what.to_string(),
        };
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        for (field, p) in [
            ("click_probability", self.click_probability),
            ("suggestion_probability", self.suggestion_probability),
            ("expand_probability", self.expand_probability),
        ] {
            if !prob(p) {
                return Err(bad(&format!("{field} = {p} is outside [0, 1]")));
            }
        }
        if let AnswerRule::Bernoulli { p } = self.answer {
            if !prob(p) {
                return Err(bad(&format!("answer p = {p} is outside [0, 1]")));
            }
        }
        for (field, w) in [
            ("query_weights", &self.query_weights),
            ("clicks_per_view_weights", &self.clicks_per_view_weights),
        ] {
            if w.is_empty()
                || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(bad(&format!(
                    "{field} needs non-negative weights with a positive sum"
                )));
            }
        }
        Ok(())
    }

    /// Expected number of queries per session.
    pub fn expected_queries(&self) -> f64 {
        weighted_mean(&self.query_weights)
    }

    /// Expected number of result clicks per session, ignoring pages that
    /// have fewer results than the sampled click count.
    pub fn expected_clicks(&self) -> f64 {
        self.expected_queries()
            * self.click_probability
            * weighted_mean(&self.clicks_per_view_weights)
    }

    /// An arbitrary well-formed policy, used for property sweeps. Delays
    /// are spread so that both sides of the 20 s deadline get exercised.
    pub fn random(rng: &mut impl Rng, name: impl Into<String>) -> Self {
        let mut range = |max: u64| {
            let a = rng.random_range(0..=max);
            let b = rng.random_range(0..=max);
            DelayRange {
                lo: a.min(b),
                hi: a.max(b),
            }
        };
        let delays = Delays {
            first_query_ms: range(15_000),
            serp_dwell_ms: range(40_000),
            doc_dwell_ms: range(30_000),
            tip_read_ms: range(8_000),
            answer_ms: range(30_000),
        };
        let n_queries = rng.random_range(1..=4);
        let n_clicks = rng.random_range(1..=4);
        Self {
            name: name.into(),
            query_weights: (0..n_queries)
                .map(|_| rng.random_range(0.0..1.0) + 0.01)
                .collect(),
            click_probability: rng.random_range(0.0..=1.0),
            clicks_per_view_weights: (0..n_clicks)
                .map(|_| rng.random_range(0.0..1.0) + 0.01)
                .collect(),
            suggestion_probability: rng.random_range(0.0..=1.0),
            expand_probability: rng.random_range(0.0..=1.0),
            answer: AnswerRule::Bernoulli {
                p: rng.random_range(0.0..=1.0),
            },
            delays,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    #[serde(rename = "policy")]
    policies: Vec<UserPolicy>,
}

impl PolicySet {
    /// The shipped policies: skimmer, clicker, tip-responsive and
    /// baseline-minimal.
    pub fn builtin() -> Self {
        Self::from_toml_str(include_str!("../../../../data/policies.toml"))
            .expect("built-in policies parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let set: PolicySet =
            toml::from_str(text).map_err(|e| SimError::PolicyFile(e.to_string()))?;
        for (i, p) in set.policies.iter().enumerate() {
            p.validate()?;
            if set.policies[..i].iter().any(|q| q.name == p.name) {
                return Err(SimError::PolicyFile(format!(
                    "duplicate policy `{}`",
                    p.name
                )));
            }
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::PolicyFile(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&UserPolicy, SimError> {
        self.policies
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| SimError::UnknownPolicy(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserPolicy> {
        self.policies.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.policies.iter().map(|p| p.name.as_str())
    }
}

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde_json::json;

use companion_core::config::ServiceConfig;
use companion_core::invariants::{check_session, Violation};
use companion_core::service::CompanionService;
use companion_core::sim::{
    run_batch, BatchSpec, BatchSummary, ConditionMix, Pace, PolicyChoice, PolicySet,
    SimulatedSession, StudyTarget, WeightedPolicy,
};
use companion_core::store::{read_sessions, ReadMode};
use companion_core::tasks::TaskSet;
use companion_core::trigger::replay;
use companion_core::Condition;
use companion_server::HttpTarget;

use crate::Format;

/// Exit status when the sweep found protocol violations.
const VIOLATIONS_EXIT: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mix {
    Alternating,
    Random,
}

/// `NAME[@CONDITION][=WEIGHT]`
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArg {
    name: String,
    condition: Option<Condition>,
    weight: f64,
}

impl FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (rest, weight) = match s.rsplit_once('=') {
            Some((rest, w)) => (rest, w.parse().map_err(|_| format!("bad weight `{w}`"))?),
            None => (s, 1.0),
        };
        let (name, condition) = match rest.split_once('@') {
            Some((name, c)) => (name, Some(c.parse()?)),
            None => (rest, None),
        };
        if name.is_empty() {
            return Err("policy name is empty".into());
        }
        Ok(Self {
            name: name.to_string(),
            condition,
            weight,
        })
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of sessions.
    #[arg(short = 'n', long, default_value_t = 100)]
    sessions: usize,
    /// Policy file; the built-in policies are used when absent.
    #[arg(long)]
    policies: Option<PathBuf>,
    /// Policy to run, as NAME[@CONDITION][=WEIGHT]. Repeatable. Defaults
    /// to every policy in the file with equal weight.
    #[arg(long = "policy")]
    policy: Vec<PolicyArg>,
    /// Generate a fresh random policy for every session.
    #[arg(long, conflicts_with = "policy")]
    randomized: bool,
    /// How conditions are spread when --condition is not given.
    #[arg(long, value_enum, default_value_t = Mix::Alternating)]
    mix: Mix,
    /// Drive a running server at this base URL instead of an in-process service.
    #[arg(long)]
    target: Option<String>,
    /// Send each request at its simulated time instead of as fast as possible.
    #[arg(long)]
    real_time: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn verify(sessions: &[SimulatedSession]) -> Vec<Violation> {
    let mut violations = Vec::new();
    for s in sessions {
        let received = s.tips_received();
        violations.extend(check_session(&s.events, &received));
        let replayed = replay(&s.events).map(|actions| {
            actions
                .into_iter()
                .map(|(t, a)| (t, a.tip()))
                .collect::<Vec<_>>()
        });
        if replayed.as_ref() != Ok(&received) {
            violations.push(Violation {
                session_id: s.session_id.to_string(),
                rule: "replay",
                detail: format!("received {received:?}, replay gives {replayed:?}"),
            });
        }
    }
    violations
}

/// The log must hold exactly what the simulated clients saw.
fn verify_log(config: &ServiceConfig, summary: &BatchSummary) -> anyhow::Result<Vec<Violation>> {
    let ours: BTreeSet<_> = summary.sessions.iter().map(|s| &s.session_id).collect();
    let logged = read_sessions(&config.log, ReadMode::Strict)
        .with_context(|| format!("reading back {}", config.log.display()))?
        .sessions;
    let mut violations = Vec::new();
    let mut seen = 0;
    for record in logged.iter().filter(|r| ours.contains(&r.session_id)) {
        seen += 1;
        let sim = summary
            .sessions
            .iter()
            .find(|s| s.session_id == record.session_id);
        if sim.map(|s| &s.events) != Some(&record.events) {
            violations.push(Violation {
                session_id: record.session_id.to_string(),
                rule: "log",
                detail: "logged events differ from the client transcript".into(),
            });
        }
    }
    if seen != ours.len() {
        anyhow::bail!(
            "{} simulated sessions are missing from the log",
            ours.len() - seen
        );
    }
    Ok(violations)
}

pub fn run(config: &ServiceConfig, args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let tasks: Vec<_> = TaskSet::load(&config.tasks)?.iter().cloned().collect();
    let set = match &args.policies {
        Some(path) => PolicySet::load(path)?,
        None => PolicySet::builtin(),
    };
    let policies = if args.randomized {
        PolicyChoice::Randomized
    } else if args.policy.is_empty() {
        PolicyChoice::Weighted(
            set.iter()
                .map(|p| WeightedPolicy {
                    policy: p.clone(),
                    weight: 1.0,
                    condition: None,
                })
                .collect(),
        )
    } else {
        let mut entries = Vec::new();
        for arg in &args.policy {
            entries.push(WeightedPolicy {
                policy: set.get(&arg.name)?.clone(),
                weight: arg.weight,
                condition: arg.condition,
            });
        }
        PolicyChoice::Weighted(entries)
    };
    let mix = match (config.assignment, args.mix) {
        (companion_core::config::AssignmentMode::Forced { condition }, _) => {
            ConditionMix::Forced(condition)
        }
        (_, Mix::Alternating) => ConditionMix::Alternating,
        (_, Mix::Random) => ConditionMix::Random,
    };
    let seed = match config.assignment {
        companion_core::config::AssignmentMode::SeededRandom { seed } => seed,
        _ => 0,
    };
    let spec = BatchSpec {
        sessions: args.sessions,
        seed,
        mix,
        policies,
        pace: if args.real_time {
            Pace::RealTime
        } else {
            Pace::Simulated
        },
    };

    let started = Instant::now();
    let (summary, mut violations, log) = match &args.target {
        Some(url) => {
            let target = HttpTarget::new(url.clone())?;
            let summary = batch(&target, &tasks, &spec)?;
            let v = verify(&summary.sessions);
            (summary, v, format!("(server at {url})"))
        }
        None => {
            let service = CompanionService::open(config)?;
            let summary = batch(&service, &tasks, &spec)?;
            drop(service);
            let mut v = verify(&summary.sessions);
            v.extend(verify_log(config, &summary)?);
            (summary, v, config.log.display().to_string())
        }
    };
    violations.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let elapsed = started.elapsed();

    match args.format {
        Format::Text => {
            println!(
                "simulated {} sessions in {:.2} s, log: {log}",
                summary.sessions.len(),
                elapsed.as_secs_f64()
            );
            for (c, n) in &summary.per_condition {
                println!("  condition {c}: {n}");
            }
            for (p, n) in &summary.per_policy {
                println!("  policy {p}: {n}");
            }
            println!("invariant violations: {}", violations.len());
        }
        Format::Structured => {
            let per_condition: serde_json::Map<_, _> = summary
                .per_condition
                .iter()
                .map(|(c, n)| (c.label().to_string(), json!(n)))
                .collect();
            let out = json!({
                "sessions": summary.sessions.len(),
                "log": log,
                "per_condition": per_condition,
                "per_policy": summary.per_policy,
                "violations": violations.iter().map(|v| json!({
                    "session_id": v.session_id, "rule": v.rule, "detail": v.detail,
                })).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    for v in &violations {
        eprintln!("violation in {}: {}: {}", v.session_id, v.rule, v.detail);
    }
    Ok(if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(VIOLATIONS_EXIT)
    })
}

fn batch<T: StudyTarget + ?Sized>(
    target: &T,
    tasks: &[companion_core::tasks::TaskDefinition],
    spec: &BatchSpec,
) -> anyhow::Result<BatchSummary> {
    Ok(run_batch(target, tasks, spec)?)
}

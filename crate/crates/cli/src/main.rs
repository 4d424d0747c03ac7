mod simulate;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use companion_core::analytics::{render_text, study_report, STUDY_ALPHA};
use companion_core::config::{AssignmentMode, ServiceConfig};
use companion_core::search::Index;
use companion_core::service::CompanionService;
use companion_core::store::{read_sessions, ReadMode};
use companion_core::tasks::TaskSet;
use companion_core::Condition;

/// Search companion study platform.
#[derive(Debug, Parser)]
#[command(name = "companion", version)]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags override the environment, which overrides the config file.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML file with service settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus in JSON Lines, one document per line.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true)]
    tasks: Option<PathBuf>,
    /// Event log to append to (serve, simulate) or read (report).
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    #[arg(long, global = true)]
    bind: Option<String>,
    /// Seed for random condition assignment and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Put every session in this condition.
    #[arg(long, global = true)]
    condition: Option<Condition>,
    #[arg(long, global = true)]
    page_size: Option<usize>,
    #[arg(long, global = true)]
    heartbeat_ms: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ServiceConfig> {
        let mut config = match &self.config {
            Some(path) => ServiceConfig::load(path)?,
            None => ServiceConfig::default(),
        };
        config.apply_env()?;
        if let Some(p) = &self.corpus {
            config.corpus = p.clone();
        }
        if let Some(p) = &self.catalog {
            config.catalog = p.clone();
        }
        if let Some(p) = &self.tasks {
            config.tasks = p.clone();
        }
        if let Some(p) = &self.log {
            config.log = p.clone();
        }
        if let Some(b) = &self.bind {
            config.bind = b.clone();
        }
        if let Some(seed) = self.seed {
            config.assignment = AssignmentMode::SeededRandom { seed };
        }
        if let Some(condition) = self.condition {
            config.assignment = AssignmentMode::Forced { condition };
        }
        if let Some(k) = self.page_size {
            config.page_size = k;
        }
        if let Some(ms) = self.heartbeat_ms {
            config.heartbeat_ms = ms;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the search index from the corpus and save it.
    Ingest {
        /// Where to write the index.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service until interrupted.
    Serve,
    /// Drive simulated sessions and check every trigger invariant.
    Simulate(simulate::SimulateArgs),
    /// Compute the study tables and hypothesis tests from an event log.
    Report {
        #[arg(long, default_value_t = STUDY_ALPHA)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip corrupt lines and invalid sessions instead of failing.
        #[arg(long)]
        lenient: bool,
    },
}

fn ingest(config: &ServiceConfig, out: &PathBuf) -> anyhow::Result<()> {
    let index = Index::ingest_corpus(&config.corpus, config.bm25)?;
    index
        .save(out)
        .with_context(|| format!("writing index to {}", out.display()))?;
    println!(
        "ingested {} documents ({} terms) into {}",
        index.len(),
        index.vocabulary_size(),
        out.display()
    );
    Ok(())
}

fn serve(config: &ServiceConfig) -> anyhow::Result<()> {
    let service = Arc::new(CompanionService::open(config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.bind)
            .await
            .with_context(|| format!("binding {}", config.bind))?;
        tracing::info!(addr = %listener.local_addr()?, log = %config.log.display(), "serving");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        companion_server::serve(service, listener, shutdown).await?;
        Ok(())
    })
}

fn report(
    config: &ServiceConfig,
    alpha: f64,
    format: Format,
    out: Option<&PathBuf>,
    lenient: bool,
) -> anyhow::Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must lie strictly between 0 and 1, got {alpha}");
    }
    let tasks = TaskSet::load(&config.tasks)?;
    let mode = if lenient {
        ReadMode::Lenient
    } else {
        ReadMode::Strict
    };
    let outcome = read_sessions(&config.log, mode)
        .with_context(|| format!("reading {}", config.log.display()))?;
    for (line, reason) in &outcome.skipped_lines {
        tracing::warn!(line, %reason, "skipped log line");
    }
    for (session, reason) in &outcome.rejected_sessions {
        tracing::warn!(%session, %reason, "skipped session");
    }
    let report = study_report(&outcome.sessions, &tasks, alpha)?;
    let text = match format {
        Format::Text => render_text(&report),
        Format::Structured => serde_json::to_string_pretty(&report)? + "\n",
    };
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::INFO)
        .init();
    let result = cli.config.resolve().and_then(|config| match &cli.command {
        Command::Ingest { out } => ingest(&config, out).map(|_| ExitCode::SUCCESS),
        Command::Serve => serve(&config).map(|_| ExitCode::SUCCESS),
        Command::Simulate(args) => simulate::run(&config, args),
        Command::Report {
            alpha,
            format,
            out,
            lenient,
        } => report(&config, *alpha, *format, out.as_ref(), *lenient).map(|_| ExitCode::SUCCESS),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `belief-agent` command line: parse prompts, chat, run self-play
//! evaluations and serve the HTTP API.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 the prompt could not be
//! parsed, 64 usage error, 69 the server could not bind, 78 configuration
//! error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use belief_agent_core::agent::{match_answer, Action, Agent, AgentError, AnswerMatch, Observation, StrategyRegistry};
use belief_agent_core::backends::{BackendConfig, BackendError, BackendRegistry};
use belief_agent_core::belief_graph::serialize_pretty;
use belief_agent_core::datasets::{load_manifest, DatasetError};
use belief_agent_core::parsing::ParseError;
use belief_agent_core::simulator::{run_batch, write_reports, SelfPlayConfig, SimError, DEFAULT_MAX_TURNS};
use belief_agent_core::templates::TemplateSet;
use belief_agent_service::{AppState, ServiceConfig, ENV_DATA_DIR};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE_FAILURE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_UNAVAILABLE: i32 = 69;
pub const EXIT_CONFIG: i32 = 78;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Parse(_) => EXIT_PARSE_FAILURE,
            CliError::Unavailable(_) => EXIT_UNAVAILABLE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Parse(ParseError::EmptyPrompt) | AgentError::EmptyInput(_) => CliError::Usage(e.to_string()),
            AgentError::UnknownStrategy(_) => CliError::Usage(e.to_string()),
            AgentError::Parse(ParseError::Backend(b)) | AgentError::Backend(b) => b.into(),
            AgentError::Parse(p) => CliError::Parse(p.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "belief-agent", version, about = "Belief-graph clarification agent for text-to-image generation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Backend profile: scripted or remote.
    #[arg(long, global = true, default_value = "scripted")]
    backend: String,
    /// Rule file for the scripted backend.
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    /// Directory of prompt template overrides (`<name>.txt`).
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Backend configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Questioning strategy.
    #[arg(long, global = true, default_value = "mhis")]
    strategy: String,
    /// Seed for image generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a prompt into a belief graph document.
    Parse {
        prompt: Option<String>,
        /// Read the prompt from a file instead.
        #[arg(long, conflicts_with = "prompt")]
        file: Option<PathBuf>,
    },
    /// Answer the agent's questions interactively.
    Chat {
        prompt: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
        max_turns: usize,
    },
    /// Run simulated-user self-play over a manifest.
    Selfplay {
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
        max_turns: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Session directory; defaults to $DATA_DIR, then ./data.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = belief_agent_service::DEFAULT_MAX_SEEDS)]
        max_seeds: usize,
    },
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, input, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Parse { prompt, file } => {
            let prompt = match (prompt, file) {
                (Some(p), _) => p,
                (None, Some(f)) => std::fs::read_to_string(&f)
                    .map_err(|e| CliError::Usage(format!("reading {}: {e}", f.display())))?,
                (None, None) => return Err(CliError::Usage("a prompt or --file is required".into())),
            };
            if prompt.trim().is_empty() {
                return Err(CliError::Usage("prompt is empty".into()));
            }
            let agent = build_agent(&cli.common)?;
            let graph = agent.parser().build_belief_graph(&prompt).map_err(|e| CliError::from(AgentError::Parse(e)))?;
            writeln!(out, "{}", serialize_pretty(&graph))?;
            Ok(())
        }
        Command::Chat { prompt, max_turns } => {
            let agent = build_agent(&cli.common)?;
            chat(&agent, &cli.common, prompt, max_turns, input, out)
        }
        Command::Selfplay { manifest, max_turns, jobs, out: dir } => {
            if max_turns == 0 {
                return Err(CliError::Usage("--max-turns must be at least 1".into()));
            }
            let agent = build_agent(&cli.common)?;
            agent.strategy(&cli.common.strategy)?;
            let config = SelfPlayConfig { max_turns, seed: cli.common.seed, ..SelfPlayConfig::new(&cli.common.strategy) };
            selfplay(&agent, &manifest, &config, jobs, &dir, out)
        }
        Command::Serve { addr, data_dir, max_seeds } => {
            let agent = build_agent(&cli.common)?;
            let dir = data_dir
                .or_else(|| std::env::var_os(ENV_DATA_DIR).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("data"));
            serve(agent, &addr, &dir, ServiceConfig { max_seeds })
        }
    }
}

fn build_agent(common: &Common) -> Result<Agent, CliError> {
    let mut config = match &common.config {
        Some(path) => BackendConfig::load(path)?,
        None => BackendConfig::default(),
    };
    config = config.apply_env(|k| std::env::var(k).ok());
    if let Some(rules) = &common.rules {
        config.scripted.rules = Some(rules.clone());
    }
    let backends = BackendRegistry::with_defaults().build(&common.backend, &config)?;
    let templates = match &common.templates {
        Some(dir) => TemplateSet::load_dir(dir).map_err(|e| CliError::Config(e.to_string()))?,
        None => TemplateSet::builtin(),
    };
    let agent = Agent::new(backends, Arc::new(templates)).with_strategies(StrategyRegistry::with_defaults());
    agent.strategy(&common.strategy)?;
    Ok(agent)
}

const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

fn chat(
    agent: &Agent,
    common: &Common,
    prompt: Option<String>,
    max_turns: usize,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut read_line = |out: &mut dyn Write, label: &str| -> Result<Option<String>, CliError> {
        write!(out, "{label}")?;
        out.flush()?;
        let mut line = String::new();
        Ok((input.read_line(&mut line)? > 0).then(|| line.trim().to_string()))
    };
    let prompt = match prompt {
        Some(p) => p,
        None => read_line(out, "prompt> ")?.unwrap_or_default(),
    };
    let mut state = agent.start_session(&prompt, &common.strategy)?;
    writeln!(out, "Commands: /graph shows the belief, /gen generates an image, /quit exits.")?;
    let mut asked = 0;
    loop {
        let action = if asked < max_turns {
            match agent.select_action(&state) {
                Ok(a) => a,
                Err(e) => {
                    writeln!(out, "error: {e}")?;
                    Action::GenerateImage { prompt: state.merged_prompt.clone() }
                }
            }
        } else {
            Action::GenerateImage { prompt: state.merged_prompt.clone() }
        };
        let choices = match &action {
            Action::AskQuestion { question_text, choices, .. } => {
                writeln!(out, "\nagent: {question_text}")?;
                for (letter, choice) in LETTERS.chars().zip(choices) {
                    writeln!(out, "  {letter}. {choice}")?;
                }
                Some(choices.clone())
            }
            _ => {
                writeln!(out, "\nNo more questions. Prompt: {}", state.merged_prompt)?;
                None
            }
        };
        let Some(line) = read_line(out, "> ")? else { return Ok(()) };
        match line.as_str() {
            "/quit" => return Ok(()),
            "/graph" => {
                writeln!(out, "{}", serialize_pretty(&state.graph))?;
                continue;
            }
            "/gen" => {
                match agent.backends().generate_image(&state.merged_prompt, common.seed) {
                    Ok(image) => writeln!(out, "image {} ({})", image.id, image.content_ref)?,
                    Err(e) => writeln!(out, "error: {e}")?,
                }
                continue;
            }
            "" => continue,
            _ => {}
        }
        let Some(choices) = choices else {
            writeln!(out, "Nothing to answer; use /gen or /quit.")?;
            continue;
        };
        // Letters become the label they stand for.
        let answer = match match_answer(&line, &choices) {
            AnswerMatch::Choice(label) => label,
            _ => line,
        };
        match agent.transition(&state, &action, &Observation::AnswerText { text: answer }) {
            Ok(next) => {
                state = next;
                asked += 1;
                if let Some(reason) = state.last_turn().and_then(|t| t.degraded.clone()) {
                    writeln!(out, "(answer kept, belief not updated: {reason})")?;
                }
                writeln!(out, "prompt: {}", state.merged_prompt)?;
            }
            Err(e) => writeln!(out, "error: {e}")?,
        }
    }
}

fn selfplay(
    agent: &Agent,
    manifest: &Path,
    config: &SelfPlayConfig,
    jobs: usize,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let manifest = load_manifest(manifest, Some(agent.parser())).map_err(|e| match e {
        DatasetError::Io { .. } | DatasetError::Schema { .. } => CliError::Usage(e.to_string()),
        DatasetError::Parse { .. } => CliError::Parse(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    let sim = |e: SimError| match e {
        SimError::Config(m) => CliError::Usage(m),
        other => CliError::Runtime(other.to_string()),
    };
    let report = run_batch(agent, &manifest.cases, config, jobs).map_err(sim)?;
    write_reports(dir, &report).map_err(sim)?;
    write!(out, "{}", std::fs::read_to_string(dir.join("summary.txt"))?)?;
    if report.transcripts.is_empty() {
        return Err(CliError::Runtime("every case failed".into()));
    }
    Ok(())
}

fn serve(agent: Agent, addr: &str, dir: &Path, config: ServiceConfig) -> Result<(), CliError> {
    let state = AppState::open(Arc::new(agent), dir, config)
        .map_err(|e| CliError::Config(format!("data directory {}: {e}", dir.display())))?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Unavailable(format!("cannot bind {addr}: {e}")))?;
        belief_agent_service::serve(listener, state, shutdown_signal()).await?;
        tracing::info!("stopped");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

//! Command-line entry points.

use crate::config::{BackendConfig, ConfigError, EngineFactory, ServiceConfig};
use crate::session::{CreateSessionRequest, ServiceError, SessionService};
use crate::store::{FileStore, StoreError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use interview_core::eval::{run_benchmark, BenchmarkConfig, CoverageMode, EvalError};
use interview_core::persona::{load_personas_dir, PersonaError};
use interview_core::questionnaire::Questionnaire;
use interview_core::simulator::{run_auto_dialogue, UserSimulator};
use interview_core::{EngineError, MethodId};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Name of the config file picked up from the working directory.
pub const DEFAULT_CONFIG_FILE: &str = "interview.toml";

#[derive(Debug, Parser)]
#[command(name = "interview", version, about = "Career interview dialogue engine")]
pub struct Cli {
    /// TOML config file. Defaults to ./interview.toml when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured session directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Overrides the configured backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendChoice>,
    /// Script file, required with `--backend script`.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Openai,
    Offline,
    Script,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interactive interview in the terminal.
    Chat(ChatArgs),
    /// Auto-dialogues between the engine and simulated personas.
    Simulate(SimulateArgs),
    /// Runs every persona against every method and writes a CSV report.
    Eval(EvalArgs),
    /// Starts the HTTP API.
    Serve(ServeArgs),
    /// Prints the shared report of a finished session.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long, default_value = "proposed2")]
    pub method: MethodId,
    /// Questionnaire JSON; a minimal one is used when omitted.
    #[arg(long)]
    pub questionnaire: Option<PathBuf>,
    /// Continues an existing session instead of starting one.
    #[arg(long)]
    pub resume: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub personas: PathBuf,
    #[arg(long, default_value = "proposed2")]
    pub method: MethodId,
    /// Writes one JSON result per persona into this directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub personas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Methods to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "baseline,proposed1,proposed2")]
    pub methods: Vec<MethodId>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also writes the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Judges check-item coverage with the model instead of keywords.
    #[arg(long)]
    pub judge: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub session: String,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: ReportFormat,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

impl Cli {
    /// Config file plus command-line overrides.
    pub fn resolve_config(&self) -> Result<ServiceConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ServiceConfig::load(path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => ServiceConfig::load(Path::new(DEFAULT_CONFIG_FILE))?,
            None => ServiceConfig::default(),
        };
        if let Some(dir) = &self.data_dir {
            config.data_dir = dir.clone();
        }
        match (self.backend, &self.script) {
            (Some(BackendChoice::Offline), _) => config.backend = BackendConfig::Offline,
            (Some(BackendChoice::Openai), _) => {
                if !matches!(config.backend, BackendConfig::OpenAi(_)) {
                    config.backend = BackendConfig::default();
                }
            }
            (Some(BackendChoice::Script), Some(path)) | (None, Some(path)) => {
                config.backend = BackendConfig::Script {
                    path: path.clone(),
                    strict: false,
                }
            }
            (Some(BackendChoice::Script), None) => {
                return Err(CliError::Usage("--backend script needs --script PATH".into()));
            }
            (None, None) => {}
        }
        Ok(config)
    }
}

fn service(config: &ServiceConfig) -> Result<SessionService, CliError> {
    let factory = EngineFactory::from_config(config)?;
    let store = FileStore::open(&config.data_dir)?;
    Ok(SessionService::new(store, factory, config.engine.clone()))
}

/// Questionnaire used by `chat` when none is given.
pub fn default_questionnaire() -> Questionnaire {
    serde_json::from_value(serde_json::json!({
        "career_development_plans": {"selected": []},
        "training_preference": {"venue": "In-hospital"},
        "next_year_preferences": {"selected": ["Continue"]}
    }))
    .expect("default questionnaire is valid")
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.resolve_config()?;
    let stdout = std::io::stdout();
    match cli.command {
        Command::Chat(args) => {
            let stdin = std::io::stdin();
            chat(&config, &args, &mut stdin.lock(), &mut stdout.lock())
        }
        Command::Simulate(args) => simulate(&config, &args, &mut stdout.lock()),
        Command::Eval(args) => eval(&config, &args, &mut stdout.lock()),
        Command::Serve(args) => serve(config, &args),
        Command::Report(args) => report(&config, &args, &mut stdout.lock()),
    }
}

pub fn chat(
    config: &ServiceConfig,
    args: &ChatArgs,
    input: &mut impl BufRead,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let service = service(config)?;
    let w = io_ctx("writing to terminal");
    let id = match &args.resume {
        Some(id) => {
            let view = service.get_state(id)?;
            for u in &view.transcript {
                writeln!(out, "{}: {}", u.speaker, u.text).map_err(io_ctx("writing to terminal"))?;
            }
            if !view.accepts_input {
                writeln!(out, "(session is finished)").map_err(w)?;
                return Ok(());
            }
            id.clone()
        }
        None => {
            let questionnaire = match &args.questionnaire {
                Some(path) => {
                    let text = std::fs::read(path).map_err(io_ctx(path.display().to_string()))?;
                    serde_json::from_slice(&text)
                        .map_err(|e| CliError::Usage(format!("{}: not a questionnaire: {e}", path.display())))?
                }
                None => default_questionnaire(),
            };
            let request = CreateSessionRequest {
                method: Some(args.method),
                ..CreateSessionRequest::new(questionnaire)
            };
            let created = service.create_session(request)?;
            writeln!(out, "session {}", created.id).map_err(io_ctx("writing to terminal"))?;
            writeln!(out, "System: {}", created.opening).map_err(w)?;
            created.id.to_string()
        }
    };
    let mut line = String::new();
    loop {
        write!(out, "You: ").and_then(|_| out.flush()).map_err(io_ctx("writing to terminal"))?;
        line.clear();
        if input.read_line(&mut line).map_err(io_ctx("reading input"))? == 0 {
            writeln!(out, "\nsession {id} saved; continue with --resume {id}").map_err(io_ctx("writing to terminal"))?;
            return Ok(());
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match service.post_utterance(&id, text) {
            Ok(reply) => {
                writeln!(out, "System: {}", reply.system_utterance).map_err(io_ctx("writing to terminal"))?;
                if reply.terminal {
                    let markdown = service.report_markdown(&id)?;
                    writeln!(out, "\n{markdown}").map_err(io_ctx("writing to terminal"))?;
                    return Ok(());
                }
            }
            Err(e @ (ServiceError::InputTooLong { .. } | ServiceError::EmptyUtterance)) => {
                writeln!(out, "({e})").map_err(io_ctx("writing to terminal"))?;
            }
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn simulate(config: &ServiceConfig, args: &SimulateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let factory = EngineFactory::from_config(config)?;
    factory.check()?;
    let personas = load_personas_dir(&args.personas)?;
    if personas.is_empty() {
        return Err(CliError::Usage(format!("no persona files in {}", args.personas.display())));
    }
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(io_ctx(dir.display().to_string()))?;
    }
    let w = || io_ctx("writing output");
    for (ix, persona) in personas.iter().enumerate() {
        let engine = factory.engine()?;
        let simulator = UserSimulator::for_engine(&engine);
        let (result, _) = run_auto_dialogue(&engine, &simulator, persona, args.method, &config.engine)?;
        writeln!(out, "== {} ({}) ==", persona.name, args.method).map_err(w())?;
        for u in &result.transcript {
            writeln!(out, "{}: {}", u.speaker, u.text).map_err(w())?;
        }
        writeln!(
            out,
            "-- turns {}, slots {}/{} filled, {} generated, ended by {}\n",
            result.turns(),
            result.final_slots.filled_count(),
            result.final_slots.len(),
            result.slots_generated(),
            result.termination_label(),
        )
        .map_err(w())?;
        if let Some(dir) = &args.out_dir {
            let path = dir.join(format!("{:02}_{}.json", ix + 1, args.method));
            let json = serde_json::to_string_pretty(&result).expect("results serialize");
            std::fs::write(&path, json).map_err(io_ctx(path.display().to_string()))?;
        }
    }
    Ok(())
}

pub fn eval(config: &ServiceConfig, args: &EvalArgs, out: &mut impl Write) -> Result<(), CliError> {
    let factory = EngineFactory::from_config(config)?;
    factory.check()?;
    let personas = load_personas_dir(&args.personas)?;
    let bench = BenchmarkConfig {
        engine: config.engine.clone(),
        coverage: if args.judge { CoverageMode::LlmJudge } else { CoverageMode::Keyword },
        workers: args.workers,
    };
    let (report, _) = run_benchmark(&personas, &args.methods, &bench, |_, _| {
        factory.engine().expect("backend was checked before the run")
    })?;
    let csv = report.to_csv().map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(&args.out, csv).map_err(io_ctx(args.out.display().to_string()))?;
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json()).map_err(io_ctx(path.display().to_string()))?;
    }
    writeln!(out, "{}", report.render_tables()).map_err(io_ctx("writing output"))?;
    writeln!(out, "wrote {} rows to {}", report.rows.len(), args.out.display()).map_err(io_ctx("writing output"))?;
    Ok(())
}

pub fn serve(mut config: ServiceConfig, args: &ServeArgs) -> Result<(), CliError> {
    if let Some(port) = args.port {
        config.server.port = port;
    }
    if let Some(bind) = &args.bind {
        config.server.bind = bind.clone();
    }
    let service = service(&config)?;
    // The backend key is required before accepting any session.
    EngineFactory::from_config(&config)?.check()?;
    let addr: std::net::SocketAddr = format!("{}:{}", config.server.bind, config.server.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad bind address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(io_ctx("starting runtime"))?;
    runtime
        .block_on(crate::http::serve(Arc::new(service), addr))
        .map_err(io_ctx(format!("serving on {addr}")))
}

pub fn report(config: &ServiceConfig, args: &ReportArgs, out: &mut impl Write) -> Result<(), CliError> {
    let service = service(config)?;
    let view = service.get_report(&args.session)?;
    let text = match args.format {
        ReportFormat::Markdown => view.markdown,
        ReportFormat::Json => serde_json::to_string_pretty(&view.shared).expect("report serializes"),
    };
    writeln!(out, "{text}").map_err(io_ctx("writing output"))?;
    Ok(())
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use periop_core::config::{Ablation, EngineConfig};
use periop_core::gateway::tools::ToolMode;
use periop_core::gateway::{BackendKind, Clock, FixedClock, SystemClock};
use periop_core::manager::{RunMode, SessionManager};
use periop_core::memory::{ingest_corpus, Embedder, EmbedderConfig};
use periop_core::metrics::{evaluate_corpus, load_eval_records, FeasibilityWeights};
use periop_core::pipeline::Engine;
use periop_core::session::{SessionStore, SessionState};
use periop_core::{Error, Result};
use periop_service::api::{self, AppState};
use periop_service::{exit_code, render};
use tracing::{info, warn};

#[derive(Parser)]
#[command(name = "periop", version, about = "Perioperative multi-agent decision support")]
struct Cli {
    /// Engine configuration file.
    #[arg(long, global = true, env = "PERIOP_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and embed a raw corpus directory.
    Ingest {
        dir: PathBuf,
        /// Write the embedded store document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one session to completion and print its output and ledger.
    Run {
        patient: String,
        task: String,
        /// Scripted backend, fixture tools and a fixed clock.
        #[arg(long)]
        offline: bool,
        /// Disable a component: planner, memory, departments or aggregation.
        #[arg(long = "ablate", value_name = "COMPONENT")]
        ablate: Vec<Ablation>,
        #[arg(long, default_value = "s0001")]
        session_id: String,
        /// Write the session document here.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Compute metrics over a directory of evaluation records.
    Eval { dir: PathBuf },
    /// Re-render a stored session document without calling any backend.
    Replay { session: PathBuf },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Require `Authorization: Bearer <token>` on every request.
        #[arg(long, env = "PERIOP_TOKEN")]
        token: Option<String>,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    let path = path.ok_or_else(|| Error::Config("no config file given (use --config or PERIOP_CONFIG)".into()))?;
    EngineConfig::load(path)
}

fn embedder(path: Option<&Path>) -> Result<Box<dyn Embedder>> {
    match path {
        Some(p) => EngineConfig::load(p)?.embedder.build(),
        None => EmbedderConfig::default().build(),
    }
}

fn ingest(config: Option<&Path>, dir: &Path, out: Option<&Path>) -> Result<()> {
    let report = ingest_corpus(dir, embedder(config)?.as_ref())?;
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    let s = &report.store;
    println!(
        "patients {}  records {}  lab panels {}  cases {}  dim {}",
        s.patients.len(),
        s.records.len(),
        s.labs.len(),
        s.cases.len(),
        s.dim
    );
    if let Some(out) = out {
        s.persist(out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run(config: Option<&Path>, patient: &str, task: &str, offline: bool, ablate: &[Ablation], id: &str, save: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let clock: Arc<dyn Clock> = if offline {
        if config.backend.kind != BackendKind::Scripted || config.tools.mode != ToolMode::Offline {
            return Err(Error::Config(
                "--offline needs backend.kind = \"scripted\" and tools.mode = \"offline\"".into(),
            ));
        }
        Arc::new(FixedClock::default())
    } else {
        Arc::new(SystemClock)
    };
    let (engine, diagnostics) = Engine::from_config(config, clock)?;
    for d in &diagnostics {
        eprintln!("warning: {d}");
    }
    let state = engine.run_session(id, patient, task, ablate)?;
    print!("{}", render::session(&state));
    if let Some(path) = save {
        let mut bytes = serde_json::to_vec_pretty(&state)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)?;
    }
    if let Some(f) = &state.failure {
        return Err(Error::Backend {
            stage: f.phase.to_string(),
            message: f.message.clone(),
        });
    }
    Ok(())
}

fn eval(config: Option<&Path>, dir: &Path) -> Result<()> {
    let records = load_eval_records(dir)?;
    let report = evaluate_corpus(&records, embedder(config)?.as_ref(), &FeasibilityWeights::default())?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let state: SessionState = SessionStore::load(path)?;
    print!("{}", render::session(&state));
    Ok(())
}

fn serve(config: Option<&Path>, bind: SocketAddr, token: Option<String>) -> Result<()> {
    let config = load_config(config)?;
    let store = config.sessions_dir.clone().map(SessionStore::open).transpose()?;
    let (engine, diagnostics) = Engine::from_config(config, Arc::new(SystemClock))?;
    for d in &diagnostics {
        warn!("{d}");
    }
    let manager = Arc::new(SessionManager::new(Arc::new(engine), store, RunMode::Background));
    for id in manager.recover()? {
        info!(session = %id, "resuming");
        manager.resume(&id)?;
    }
    let app = api::router(AppState { manager, token });
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        info!(%bind, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();

    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Ingest { dir, out } => ingest(config, dir, out.as_deref()),
        Command::Run {
            patient,
            task,
            offline,
            ablate,
            session_id,
            save,
        } => run(config, patient, task, *offline, ablate, session_id, save.as_deref()),
        Command::Eval { dir } => eval(config, dir),
        Command::Replay { session } => replay(session),
        Command::Serve { bind, token } => serve(config, *bind, token.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

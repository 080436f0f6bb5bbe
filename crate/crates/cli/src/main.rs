use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bilevel_cli::service::{serve, AppState};
use bilevel_core::feedback::HumanChannel;
use bilevel_core::orchestrator::{
    load_run, replay, rescore, run, Mode, RunConfig, RunError, RunState, RunStatus, SystemClock,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bilevel", version, about = "Reward learning from demonstration videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RootArg {
    /// Directory holding run directories.
    #[arg(long, default_value = "runs")]
    root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "run-id")]
        run_id: Option<String>,
        /// Port of the feedback service started for human-mode runs.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        root: RootArg,
    },
    /// Recompute the normalized expert score of a stored run.
    Eval {
        #[arg(long)]
        run: String,
        #[arg(long = "expert-score")]
        expert_score: PathBuf,
        /// Iteration to score; defaults to the last one.
        #[arg(long)]
        iteration: Option<usize>,
        #[command(flatten)]
        root: RootArg,
    },
    /// Print the per-iteration score table of a run.
    Report {
        #[arg(long)]
        run: String,
        #[command(flatten)]
        root: RootArg,
    },
    /// Serve the HTTP API over the run root.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        root: RootArg,
    },
    /// Re-render the frames of a stored iteration.
    Replay {
        #[arg(long)]
        run: String,
        #[arg(long)]
        iteration: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        root: RootArg,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(config)
}

fn execute(config: RunConfig, root: &Path, port: u16) -> Result<RunState, RunError> {
    if config.mode != Mode::Human {
        return run(&config, root, &SystemClock, None);
    }
    let human = HumanChannel::new();
    let app = AppState::new(root, human.clone(), Box::new(SystemClock));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| RunError::Config(e.to_string()))?;
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| RunError::Config(format!("cannot bind {addr}: {e}")))?;
    eprintln!("feedback service on http://{addr}");
    runtime.spawn(async move {
        if let Err(e) = axum::serve(listener, bilevel_cli::service::router(app)).await {
            tracing::error!(error = %e, "service stopped");
        }
    });
    let root = root.to_path_buf();
    let outcome = runtime.block_on(tokio::task::spawn_blocking(move || {
        run(&config, &root, &SystemClock, Some(human))
    }));
    runtime.shutdown_background();
    outcome.map_err(|e| RunError::Config(format!("run thread failed: {e}")))?
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            run_id,
            port,
            root,
        } => {
            let mut config = load_config(&config)?;
            if let Some(mode) = mode {
                config.mode = mode;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if run_id.is_some() {
                config.run_id = run_id;
            }
            let state = execute(config, &root.root, port)?;
            println!("{}", state.run_id);
            if let Some(s) = state.scores().last().copied().flatten() {
                println!("final S = {s:.6}");
            }
            if let RunStatus::Aborted { reason, iteration, .. } = &state.status {
                return Err(Failure {
                    code: 2,
                    error: anyhow!("run aborted in iteration {iteration}: {reason}"),
                });
            }
        }
        Command::Eval {
            run,
            expert_score,
            iteration,
            root,
        } => {
            let state = load_run(&root.root, &run)?;
            let source = std::fs::read_to_string(&expert_score)
                .with_context(|| format!("reading {}", expert_score.display()))?;
            let score = rescore(&state, iteration, &source)?;
            println!("S = {:.6}", score.normalized);
        }
        Command::Report { run, root } => {
            let state = load_run(&root.root, &run)?;
            println!("run {} ({}, {})", state.run_id, state.config.mode, status_name(&state.status));
            println!("{:>9}  {:>12}  {:>10}  {:>12}", "iteration", "raw", "S", "fitness");
            for r in &state.iterations {
                println!(
                    "{:>9}  {:>12}  {:>10}  {:>12}",
                    r.index,
                    fmt_opt(r.score.raw),
                    fmt_opt(r.score.normalized),
                    fmt_opt(r.score.fitness)
                );
            }
        }
        Command::Serve { port, root } => {
            let app = AppState::new(root.root, HumanChannel::new(), Box::new(SystemClock));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(app, SocketAddr::from(([127, 0, 0, 1], port))))?;
        }
        Command::Replay {
            run,
            iteration,
            out,
            root,
        } => {
            let replayed = replay(&root.root, &run, iteration, &out)?;
            println!("wrote {} frames to {}", replayed.manifest.count, out.display());
            if !replayed.matches {
                return Err(anyhow!("replayed trajectory differs from the stored one").into());
            }
        }
    }
    Ok(())
}

fn status_name(status: &RunStatus) -> &'static str {
    match status {
        RunStatus::Running => "running",
        RunStatus::Completed => "completed",
        RunStatus::Aborted { .. } => "aborted",
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

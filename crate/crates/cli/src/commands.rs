use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use prefmorl::session::{
    archive_csv, load_checkpoint, metrics_table, run_to_completion, save_checkpoint, RunMode,
    Session, SessionConfig, SessionState,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] prefmorl::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "prefmorl", version, about = "Interactive preference-guided multi-objective RL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preference-guided session with the simulated decision maker.
    Run(RunArgs),
    /// Run the no-preference control with the same budget.
    Baseline(RunArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
    /// Continue a session from a checkpoint.
    Resume(ResumeArgs),
    /// Print the distance table and archive CSV of a checkpoint.
    Report(ReportArgs),
    /// Print a complete example config.
    ExampleConfig,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Session config (JSON).
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the metrics log, checkpoints and archive CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Config used when a create request does not carry one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Directory for per-session checkpoints.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write `archive.csv` and `epsilon.txt` here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<SessionConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    Ok(SessionConfig::from_json(&text)?)
}

fn prepare_out(out: Option<&Path>) -> Result<(), CliError> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    Ok(())
}

fn attach_log(session: Session, out: Option<&Path>) -> Result<Session, CliError> {
    let Some(dir) = out else {
        return Ok(session);
    };
    let path = dir.join("metrics.ndjson");
    let file = File::options().create(true).append(true).open(&path).map_err(io_at(&path))?;
    Ok(session.with_log(Box::new(BufWriter::new(file))))
}

fn finish(session: Session, out: Option<&Path>) -> Result<SessionState, CliError> {
    let checkpoint = out.map(|d| d.join("checkpoint.json"));
    let state = run_to_completion(session, checkpoint.as_deref())?;
    write_report(&state, out)?;
    Ok(state)
}

/// Prints the distance table, and writes the final state and archive CSV
/// when an output directory is given (printing the CSV otherwise).
pub fn write_report(state: &SessionState, out: Option<&Path>) -> Result<(), CliError> {
    let table = metrics_table(&state.metrics);
    let csv = archive_csv(&state.archive);
    let summary = match state.epsilons() {
        Some((s, b)) => format!("final eps_star={s:.6} eps_bar={b:.6}"),
        None => "no golden target; distances not computed".to_string(),
    };
    match out {
        Some(dir) => {
            let state_path = dir.join("final.json");
            save_checkpoint(state, &state_path)?;
            for (name, text) in [("archive.csv", &csv), ("epsilon.txt", &table)] {
                let p = dir.join(name);
                fs::write(&p, text).map_err(io_at(&p))?;
            }
            print!("{table}");
            println!("{summary}");
            println!("wrote {}", dir.display());
        }
        None => {
            print!("{table}");
            println!("{summary}");
            print!("{csv}");
        }
    }
    Ok(())
}

pub fn run(args: &RunArgs, mode: RunMode) -> Result<SessionState, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.as_deref();
    prepare_out(out)?;
    let session = attach_log(Session::new(cfg, mode)?, out)?;
    finish(session, out)
}

pub fn resume(args: &ResumeArgs) -> Result<SessionState, CliError> {
    let state = load_checkpoint(&args.checkpoint)?;
    let out = args.out.as_deref();
    prepare_out(out)?;
    let session = attach_log(Session::from_state(state)?, out)?;
    finish(session, out)
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let state = load_checkpoint(&args.checkpoint)?;
    prepare_out(args.out.as_deref())?;
    write_report(&state, args.out.as_deref())
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => SessionConfig::example(),
    };
    prepare_out(args.out.as_deref())?;
    let svc = crate::server::ServiceState::new(cfg, args.out.clone());
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {}: {e}", args.bind)))?;
        crate::server::serve(listener, svc)
            .await
            .map_err(|e| CliError::Usage(e.to_string()))
    })
}

pub fn example_config() -> String {
    serde_json::to_string_pretty(&SessionConfig::example()).expect("config serializes")
}

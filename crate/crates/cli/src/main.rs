//! `dhym`: batch driver for the torus solver and the verification suites.
//!
//! Exit status is 0 on success, 1 when a run finishes but a check fails, and
//! 2 on usage or configuration errors. `DHYM_THREADS` caps the worker pool.

mod config;
mod report;
mod solve;
mod table;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::Config;

pub const THREADS_VAR: &str = "DHYM_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dhym", version, about = "Twisted dHYM solver and lemma audits on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    config: PathBuf,
    /// Output directory; defaults to the `output` key, then `<config dir>/out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` settings applied on top of the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the continuity solver and writes path log, field and phase CSVs.
    Solve(RunArgs),
    /// Runs verification suites and writes `suites.csv`.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Suite to run; repeat for several. Defaults to the `suites` key, then all.
        #[arg(long = "suite", value_name = "NAME")]
        suites: Vec<String>,
    },
    /// Turns artifacts of earlier runs into gnuplot `.dat` files.
    Report {
        dir: PathBuf,
        /// Where to write the `.dat` files; defaults to `dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parsed config plus the resolved output location.
pub struct RunConfig {
    pub config: Config,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    fn load(args: &RunArgs) -> Result<Self, CliError> {
        let mut config = Config::load(&args.config)?;
        config.apply_overrides(&args.overrides)?;
        let file_seed = config.get_or("seed", 42u64)?;
        let seed = args.seed.unwrap_or(file_seed);
        let out_dir = match (&args.out, config.path("output")) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => p,
            (None, None) => config.resolve("out"),
        };
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        Ok(Self { config, out_dir, seed })
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_VAR}={value:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve(args) => solve::cmd_solve(&RunConfig::load(&args)?),
        Command::Verify { run, suites } => verify::cmd_verify(&RunConfig::load(&run)?, &suites),
        Command::Report { dir, out } => report::cmd_report(&dir, out.as_deref().unwrap_or(&dir)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dhym: {e}");
            ExitCode::from(e.code())
        }
    }
}

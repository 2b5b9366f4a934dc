//! `ssb` — config-driven runner for the soft-bridge experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric nonconvergence.

mod config;
mod manifest;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use ssb_core::SsbError;

use manifest::OutputDir;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    NonConvergence(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::NonConvergence(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<SsbError> for CliError {
    fn from(e: SsbError) -> CliError {
        match e {
            SsbError::NonConvergence { .. } | SsbError::QuadratureNonConvergence { .. } => {
                CliError::NonConvergence(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::Runtime(format!("serialization error: {e}"))
    }
}

#[derive(Parser)]
struct Common {
    /// Path to a JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rayon thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Bump path counts to the scale used in the writeup (10k paths).
    #[arg(long, global = true, default_value_t = false)]
    paper_scale: bool,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cauchy-target robustness sweep over β and MC batch size.
    Cauchy,
    /// Four-component normal mixture bridged onto a geometric mixture.
    NormalMixture,
    /// Discrete Schrödinger-system fixed point on 1D lattices.
    SystemSolve,
    /// Score-matching desk case: train, then reverse-bridge sample.
    ScoreDesk,
    /// Multi-checkpoint time-series bridge.
    TimeSeries,
}

#[derive(Parser)]
#[command(name = "ssb", version, about = "Soft-bridge experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

fn load<T: DeserializeOwned>(raw: &[u8]) -> Result<T, CliError> {
    serde_json::from_slice(raw).map_err(|e| CliError::Config(format!("bad config: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let common = &cli.common;
    let raw = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let raw = std::fs::read(raw)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", raw.display())))?;
    let start = Instant::now();

    macro_rules! dispatch {
        ($cfg:ty, $name:expr, $runner:path, $apply:expr) => {{
            let mut cfg: $cfg = load(&raw)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            #[allow(clippy::redundant_closure_call)]
            ($apply)(&mut cfg);
            let dir = common
                .out
                .clone()
                .or_else(|| cfg.out.clone())
                .ok_or_else(|| {
                    CliError::Config("no output directory: set `out` in the config or pass --out".into())
                })?;
            let mut out = OutputDir::create(&dir)?;
            $runner(&cfg, &mut out)?;
            out.finish($name, &raw, cfg.seed, start.elapsed().as_secs_f64())?;
            Ok(())
        }};
    }

    let paper = common.paper_scale;
    match cli.command {
        Command::Cauchy => dispatch!(config::CauchyConfig, "cauchy", runners::run_cauchy, |c: &mut config::CauchyConfig| {
            if paper {
                c.n_paths = 10_000;
            }
        }),
        Command::NormalMixture => dispatch!(
            config::NormalMixtureConfig,
            "normal_mixture",
            runners::run_normal_mixture,
            |c: &mut config::NormalMixtureConfig| {
                if paper {
                    c.n_paths = 10_000;
                }
            }
        ),
        Command::SystemSolve => dispatch!(
            config::SystemSolveConfig,
            "system_solve",
            runners::run_system_solve,
            |_c: &mut config::SystemSolveConfig| {}
        ),
        Command::ScoreDesk => dispatch!(
            config::ScoreDeskConfig,
            "score_desk",
            runners::run_score_desk,
            |_c: &mut config::ScoreDeskConfig| {}
        ),
        Command::TimeSeries => dispatch!(
            config::TimeSeriesConfig,
            "time_series",
            runners::run_time_series,
            |_c: &mut config::TimeSeriesConfig| {}
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

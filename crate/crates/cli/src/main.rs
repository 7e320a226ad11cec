mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

/// Lie group convolution networks: data preparation, training, evaluation
/// and equivariance audits.
#[derive(Debug, Parser)]
#[command(name = "lgcn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Image index for `lift-dump`.
    #[arg(long, global = true)]
    index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Transform and split a source dataset into IDX files.
    Prepare,
    /// Train on the prepared training split.
    Train,
    /// Top-1 accuracy and confusion matrix of a checkpoint.
    Eval,
    /// Run the equivariance audit.
    Check,
    /// Write one lifted image as CSV.
    LiftDump,
}

pub enum Failure {
    Validation(String, String),
    Runtime(String, String),
    CheckFailed(String),
}

impl Failure {
    fn from_core(e: lgcn_core::Error) -> Self {
        let msg = e.to_string();
        match e {
            lgcn_core::Error::InvalidConfig(_) => Failure::Validation(e.kind_name().into(), msg),
            _ => Failure::Runtime(e.kind_name().into(), msg),
        }
    }
}

impl From<lgcn_core::Error> for Failure {
    fn from(e: lgcn_core::Error) -> Self {
        Failure::from_core(e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("LGCN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Failure::Validation(
                "InvalidConfig".into(),
                format!("LGCN_THREADS must be a positive integer, got {value:?}"),
            )
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime("ThreadPool".into(), e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    let opts = commands::Overrides {
        seed: cli.seed,
        checkpoint: cli.checkpoint,
        index: cli.index,
    };
    match cli.command {
        Command::Prepare => commands::prepare(&cfg, &opts),
        Command::Train => commands::train(&cfg, &opts),
        Command::Eval => commands::eval(&cfg, &opts),
        Command::Check => commands::check(&cfg, &opts),
        Command::LiftDump => commands::lift_dump(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: kind=Usage msg={}", one_line(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(kind, msg)) => {
            eprintln!("error: kind={kind} msg={}", one_line(&msg));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(kind, msg)) => {
            eprintln!("error: kind={kind} msg={}", one_line(&msg));
            ExitCode::from(2)
        }
        Err(Failure::CheckFailed(msg)) => {
            eprintln!("error: kind=CheckFailed msg={}", one_line(&msg));
            ExitCode::from(3)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod samples;

use config::FileConfig;

/// Inceptive event time-surfaces for event-camera recordings.
#[derive(Debug, Parser)]
#[command(name = "iets", version, about)]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for per-sample parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert an event file between dat, aedat2 and csv.
    Convert(commands::ConvertArgs),
    /// Write one frame per sample for each requested variant.
    Surface(commands::SurfaceArgs),
    /// Report event reduction by the FSAE and inceptive filters.
    Stats(commands::StatsArgs),
    /// Measure end-to-end frame throughput.
    Bench(commands::BenchArgs),
    /// Generate labeled synthetic recordings.
    Synth(commands::SynthArgs),
    /// Train and score a linear classifier per frame variant.
    Eval(commands::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(status) => status,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.workers.or(file.workers) {
        anyhow::ensure!(n > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let workers = cli.workers.or(file.workers);
    match cli.command {
        Command::Convert(args) => commands::convert(args),
        Command::Surface(args) => commands::surface(args, &file),
        Command::Stats(args) => commands::stats(args, &file),
        Command::Bench(args) => commands::bench(args, &file, workers),
        Command::Synth(args) => commands::synth(args, &file),
        Command::Eval(args) => commands::eval(args, &file),
    }
}

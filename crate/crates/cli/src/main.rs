mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Overrides};

/// Attributes video frames to a camera by its sensor noise, tolerating
/// scaling, rotation and translation.
#[derive(Debug, Parser)]
#[command(name = "prnu-mfm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML file of defaults; every key is optional.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log-polar crop in rows of the 2896-row reference axis; a
    /// comma-separated list sweeps crops in `bench`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "ROWS")]
    delta_rho: Vec<f64>,
    /// PCE decision threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Write JSON output (report lines or bench summary) here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Write the bench CSV here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a device fingerprint from flat-field images.
    Fingerprint(commands::FingerprintArgs),
    /// Extract the noise residual of one image.
    ExtractNoise(commands::ExtractArgs),
    /// Estimate the transform taking a fingerprint onto one frame.
    Align(commands::AlignArgs),
    /// Test frames against a fingerprint and fuse the per-frame verdicts.
    Match(commands::MatchArgs),
    /// Run the seeded synthetic benchmark.
    Bench(commands::BenchArgs),
}

/// Exit status of a `match` whose fused decision is negative.
const EXIT_UNMATCHED: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let g = cli.global;
    let overrides = Overrides { seed: g.seed, threads: g.threads, delta_rho: g.delta_rho.clone(), threshold: g.threshold };
    let cfg = Config::load(g.config.as_deref(), &overrides)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    let outputs = commands::Outputs { json: g.json, csv: g.csv };
    if g.delta_rho.len() > 1 && !matches!(cli.command, Command::Bench(_)) {
        anyhow::bail!("a list of --delta-rho values is only accepted by bench");
    }
    match cli.command {
        Command::Fingerprint(a) => commands::fingerprint(&cfg, &a).map(|_| ExitCode::SUCCESS),
        Command::ExtractNoise(a) => commands::extract_noise(&cfg, &a).map(|_| ExitCode::SUCCESS),
        Command::Align(a) => commands::align(&cfg, &a, &outputs).map(|_| ExitCode::SUCCESS),
        Command::Match(a) => commands::match_frames(&cfg, &a, &outputs).map(|outcome| match outcome {
            commands::MatchOutcome::Matched => ExitCode::SUCCESS,
            commands::MatchOutcome::Unmatched => ExitCode::from(EXIT_UNMATCHED),
            commands::MatchOutcome::NoFrames => ExitCode::from(EXIT_ERROR),
        }),
        Command::Bench(a) => commands::bench(&cfg, &a, &outputs).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

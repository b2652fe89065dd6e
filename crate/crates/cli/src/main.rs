use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use yieldcast::ModeSelection;
use yieldcast_cli::{cmd_compare, cmd_evaluate, cmd_features, cmd_ingest, cmd_synth, RunConfig};

/// Zone-level winter wheat yield experiments.
#[derive(Parser)]
#[command(name = "yieldcast", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `paths.out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `mode`: soil, soil_weather or both.
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<ModeSelection>,
    /// Overrides `test_year`.
    #[arg(long = "test-year", global = true, value_name = "Y")]
    test_year: Option<i32>,
    /// Overrides `threads` (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into OUT/data.
    Synth {
        /// Make yield independent of weather.
        #[arg(long)]
        null: bool,
    },
    /// Validate raw CSVs into OUT/clean and OUT/rejections.csv.
    Ingest,
    /// Write per-mode design matrices and the dropped zone-years.
    Features,
    /// Train, score and test every configured model.
    Evaluate,
    /// Append the paired soil vs soil+weather comparison to the report.
    Compare,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.out {
        cfg.paths.out = v;
    }
    if let Some(v) = cli.mode {
        cfg.mode = v;
    }
    if let Some(v) = cli.test_year {
        cfg.test_year = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = v;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()?;
    }
    match cli.command {
        Command::Synth { null } => {
            if null {
                cfg.synth = cfg.synth.null();
            }
            cmd_synth(&cfg)?;
        }
        Command::Ingest => {
            cmd_ingest(&cfg)?;
        }
        Command::Features => {
            cmd_features(&cfg)?;
        }
        Command::Evaluate => {
            cmd_evaluate(&cfg)?;
        }
        Command::Compare => {
            cmd_compare(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

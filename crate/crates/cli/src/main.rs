//! `ilfo-lab`: runs imitation, bandit and verification experiments from a
//! JSON config and writes plot-ready CSV files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ilfo_core::experiment::{exit_code, parse_config, run_experiment, ExperimentConfig, Subcommand};

/// Environment variable that overrides `--jobs`.
const JOBS_ENV: &str = "ILFO_LAB_JOBS";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    MobileTabular,
    MobileKnr,
    MabLb,
    VerifySuite,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::MobileTabular => Subcommand::MobileTabular,
            Command::MobileKnr => Subcommand::MobileKnr,
            Command::MabLb => Subcommand::MabLb,
            Command::VerifySuite => Subcommand::VerifySuite,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ilfo-lab", version, about = "Imitation-from-observation experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds (overrides `seeds` in the config).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads for independent seeds.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn jobs(flag: usize) -> Result<usize, String> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{JOBS_ENV} must be a positive integer, got `{v}`")),
        Err(_) if flag == 0 => Err("--jobs must be at least 1".to_string()),
        Err(_) => Ok(flag),
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, (u8, String)> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| (3, format!("{}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| (2, e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let jobs = match jobs(cli.jobs) {
        Ok(j) => j,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let result = run_experiment(&cfg, cli.command.into(), jobs);
    match &result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if !outcome.passed {
                eprintln!("one or more checks failed; see verify_report.json");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}

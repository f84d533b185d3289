use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecodyn_cli::commands;
use ecodyn_cli::config::ScenarioConfig;
use ecodyn_cli::output::Format;
use ecodyn_cli::CliError;

#[derive(Parser)]
#[command(name = "ecodyn", version, about = "Influence dynamics on product-ecosystem networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized studies.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario and write the trajectory and a summary.
    Simulate,
    /// Amplification, sensitivity, ROI, perception and frequency report.
    Analyze,
    /// Sweep the effective spreading rate and bracket the threshold.
    Threshold,
    /// Fit a generator to snapshots, or run a sparse-recovery study.
    Estimate,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ScenarioConfig::load(path)?;
    if cli.seed.is_some() && !matches!(cli.command, Command::Estimate) {
        return Err(CliError::Config("--seed is only used by estimate".into()));
    }
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &cli.out, cli.format),
        Command::Analyze => commands::analyze(&cfg, &cli.out, cli.format),
        Command::Threshold => commands::threshold(&cfg, &cli.out, cli.format),
        Command::Estimate => commands::estimate(&cfg, &cli.out, cli.format, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigsde_cli::{run, CliError, Overrides};

#[derive(Parser)]
#[command(name = "sigsde", version, about = "Signature volatility model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the selected command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of sample paths for the selected command.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Price the synthetic Black–Scholes market.
    GenMarket,
    /// Regress every product onto signature payoffs.
    FitPayoffs,
    /// Fit the volatility functional to the market.
    Calibrate,
    /// Price fitted payoffs under calibrated parameters.
    Price,
    /// Sample model paths.
    Simulate,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let command = match cli.command {
        Command::GenMarket => "gen-market",
        Command::FitPayoffs => "fit-payoffs",
        Command::Calibrate => "calibrate",
        Command::Price => "price",
        Command::Simulate => "simulate",
    };
    let overrides = Overrides { seed: cli.common.seed, paths: cli.common.paths, out: cli.common.out };
    match run(command, cli.common.config.as_deref(), &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

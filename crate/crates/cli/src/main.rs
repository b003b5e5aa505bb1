mod commands;
mod config;
mod market;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::{
    BacktestArgs, CalibrateArgs, CorrectArgs, FitDensityArgs, InputError, PriceArgs, SweepArgs,
};

#[derive(Parser, Debug)]
#[command(name = "hermicop", version, about = "Hermite-expansion copulas and FX cross-smile estimation")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hermite approximations of classical copula densities, raw and corrected.
    FitDensity(FitDensityArgs),
    /// Fit copula families to a market cross smile.
    Calibrate(CalibrateArgs),
    /// Month-long backtest of recalibrated and frozen parameters.
    Backtest(BacktestArgs),
    /// Price the cross smile for given copula parameters.
    Price(PriceArgs),
    /// Cross ATM vol against shifts of each copula parameter.
    ParamSweep(SweepArgs),
    /// Correct a grid density onto normalization, non-negativity and its own moments.
    Correct(CorrectArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hermicop::Error>() {
            return match e {
                hermicop::Error::MissingData(_) => 3,
                hermicop::Error::NonConvergence(_) | hermicop::Error::ZeroNorm => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<InputError>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<csv::Error>().is_some()
        {
            return 2;
        }
    }
    4
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HERMICOP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| InputError(format!("HERMICOP_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(InputError("HERMICOP_THREADS must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::FitDensity(a) => commands::fit_density(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Backtest(a) => commands::backtest(a),
        Command::Price(a) => commands::price(a),
        Command::ParamSweep(a) => commands::param_sweep(a),
        Command::Correct(a) => commands::correct(a),
    }
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
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

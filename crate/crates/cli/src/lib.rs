//! Command-line front end for the `sofr-core` toolkit.
//!
//! Every command reads CSV or TOML inputs, writes plot-ready CSV into the
//! output directory and maps failures onto a fixed set of exit codes
//! (see [`error::CliError::exit_code`]).

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{CalibrateArgs, CheckArbArgs, Context, FitArgs, PriceArgs, SimulateArgs};
use crate::config::{AppConfig, ArbKind};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "sofr",
    version,
    about = "SOFR curve calibration, scenario simulation and pricing"
)]
pub struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed, overriding the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for simulation; all cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one day's forward curve to futures quotes.
    Calibrate {
        /// Quote file with columns date,kind,delivery,bid,ask.
        #[arg(long)]
        quotes: PathBuf,
        /// Trade date, YYYY-MM-DD.
        #[arg(long)]
        date: String,
        /// Fit mid quotes instead of bid-ask bands.
        #[arg(long)]
        mid: bool,
        /// Pin the overnight forward to this rate.
        #[arg(long)]
        anchor_sofr: Option<f64>,
    },
    /// Estimate the curve and macro factor models from histories.
    Fit {
        /// Multi-day quote file.
        #[arg(long)]
        quotes: PathBuf,
        /// Observable history with columns date and SOFR, L, H, I, G.
        #[arg(long)]
        series: PathBuf,
    },
    /// Simulate scenarios and write quantile bands.
    Simulate {
        /// Model file from `fit`; built-in parameters when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Number of scenarios, overriding the configured count.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Also write the first N scenarios as long-format CSV.
        #[arg(long, value_name = "N")]
        extract: Option<usize>,
    },
    /// Indifference prices from a simulated scenario set.
    Price {
        /// Scenario file; OUT_DIR/scenarios.bin when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Instrument file with [[instrument]] tables.
        #[arg(long)]
        instruments: Option<PathBuf>,
    },
    /// Sampled no-arbitrage check at one day.
    CheckArb {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Day offset of the tested state.
        #[arg(long, default_value_t = 0)]
        t: u32,
        /// Number of conditional draws M.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ArbKind>,
    },
}

fn parse_kind(s: &str) -> Result<ArbKind, String> {
    match s {
        "futures" => Ok(ArbKind::Futures),
        "zcb" => Ok(ArbKind::Zcb),
        _ => Err(format!("expected futures or zcb, got {s:?}")),
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = AppConfig::load(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let ctx = Context {
        config,
        out_dir: cli.out_dir,
        seed: cli.seed,
        threads: cli.threads,
    };
    match cli.command {
        Command::Calibrate {
            quotes,
            date,
            mid,
            anchor_sofr,
        } => commands::calibrate(
            &ctx,
            &CalibrateArgs {
                quotes,
                date,
                mid,
                anchor_sofr,
            },
        ),
        Command::Fit { quotes, series } => commands::fit(&ctx, &FitArgs { quotes, series }),
        Command::Simulate {
            model,
            scenarios,
            extract,
        } => commands::simulate(
            &ctx,
            &SimulateArgs {
                model,
                scenarios,
                extract,
            },
        ),
        Command::Price {
            scenarios,
            instruments,
        } => commands::price(
            &ctx,
            &PriceArgs {
                scenarios,
                instruments,
            },
        ),
        Command::CheckArb {
            model,
            t,
            samples,
            epsilon,
            kind,
        } => commands::check_arb(
            &ctx,
            &CheckArbArgs {
                model,
                t,
                samples,
                epsilon,
                kind,
            },
        ),
    }
}

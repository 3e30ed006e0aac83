//! `selfcons`: calibrate the market models, solve the HJB equation, and
//! evaluate the resulting dispatch policy by Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bundle;
mod commands;
mod settings;
mod times;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::CalibrateArgs;
use settings::RunConfig;

#[derive(Parser)]
#[command(name = "selfcons", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args)]
struct Common {
    /// TOML file with flat dotted keys, e.g. `battery.eta_c = 0.99`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Monte Carlo paths.
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,
    /// Also search an N x N control lattice at every node.
    #[arg(long, global = true, value_name = "N")]
    dense_controls: Option<usize>,
    /// Forward p-differences everywhere instead of upwinding.
    #[arg(long, global = true)]
    paper_verbatim_stencil: bool,
    /// Comma-separated HH:MM or decimal hours.
    #[arg(long, global = true, value_name = "LIST")]
    slice_times: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit seasonal curves and OU parameters to CSV series.
    Calibrate {
        #[arg(long, value_name = "CSV")]
        price: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        demand: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        pv: Option<PathBuf>,
    },
    /// Solve the value function and write policy slices.
    Solve,
    /// Monte Carlo cost of the extracted policy and the baselines.
    Simulate {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Optimal action and marginal gauges at one state.
    Policy {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// HH:MM or decimal hours.
        #[arg(long)]
        time: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        log_pv: Option<f64>,
        /// MWh.
        #[arg(long)]
        soc: Option<f64>,
    },
    /// Verify checksums and summarise an output directory.
    Report,
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut rc = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::defaults(),
    };
    if let Some(seed) = common.seed {
        rc.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        rc.out = out.clone();
    }
    if let Some(paths) = common.paths {
        rc.paths = paths;
    }
    if let Some(n) = common.dense_controls {
        rc.dense_controls = Some(n);
    }
    if common.paper_verbatim_stencil {
        rc.paper_verbatim_stencil = true;
    }
    if let Some(list) = &common.slice_times {
        times::parse_list(list)?;
        rc.slice_times = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    Ok(rc)
}

fn run(cli: Cli) -> Result<()> {
    let mut rc = run_config(&cli.common)?;
    log::info!("{}", commands::describe(&rc.model));
    match cli.command {
        Command::Calibrate { price, demand, pv } => {
            commands::calibrate(&rc, &CalibrateArgs { price, demand, pv })
        }
        Command::Solve => commands::solve(&rc),
        Command::Simulate { checkpoint } => commands::simulate(&rc, checkpoint.as_deref()),
        Command::Policy {
            checkpoint,
            time,
            log_pv,
            soc,
        } => {
            if let Some(t) = time {
                rc.query.time = Some(times::parse_time(&t)?);
            }
            rc.query.log_pv = log_pv.or(rc.query.log_pv);
            rc.query.soc = soc.or(rc.query.soc);
            let answer = commands::policy(&rc, checkpoint.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&answer)?);
            Ok(())
        }
        Command::Report => commands::report(&rc),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Library side of the `gpsysid` binary: argument definitions, config and
//! data handling, and the command implementations.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod model;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{EvalChoice, Io, PredictFlags, SimulateMode};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "gpsysid", version, about = "Gaussian-process system identification")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step; overrides the config and model file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (written atomically); stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Suppress the fit report.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data set as CSV.
    Gen {
        /// sinusoid | linear-arx | logistic-narx | gp-draw | pendulum
        generator: String,
        /// Number of samples (transitions for pendulum).
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Generator parameter, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Fit the configured model and write a model file to --out.
    Fit {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
    },
    /// Posterior predictions at the query rows.
    Predict {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Add q2.5 and q97.5 columns (mean ± 1.96 standard deviations).
        #[arg(long)]
        quantiles: bool,
        /// Widen the quantile band by the observation noise.
        #[arg(long)]
        observation_noise: bool,
    },
    /// Free-run simulation from the initial rows of the data.
    Simulate {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value = "mean")]
        mode: SimArg,
        #[arg(long)]
        quantiles: bool,
        #[arg(long)]
        observation_noise: bool,
    },
    /// Error metrics as key=value lines.
    Eval {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<EvalArg>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimArg {
    Mean,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalArg {
    OneStep,
    FreeRun,
    Filter,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let io = Io {
        out: cli.out.as_deref(),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Gen { generator, n, set } => commands::gen(generator, *n, set, cli.seed, &io),
        Command::Fit { data } => commands::fit(cli.config.as_deref(), data, cli.seed, &io),
        Command::Predict {
            model,
            data,
            quantiles,
            observation_noise,
        } => {
            let flags = PredictFlags {
                quantiles: *quantiles,
                observation_noise: *observation_noise,
            };
            commands::predict(model, data, &flags, &io)
        }
        Command::Simulate {
            model,
            data,
            horizon,
            mode,
            quantiles,
            observation_noise,
        } => {
            let mode = match mode {
                SimArg::Mean => SimulateMode::Mean,
                SimArg::Sample => SimulateMode::Sample,
            };
            let flags = PredictFlags {
                quantiles: *quantiles,
                observation_noise: *observation_noise,
            };
            commands::simulate_cmd(model, data, *horizon, mode, cli.seed, &flags, &io)
        }
        Command::Eval { model, data, mode } => {
            let choice = mode.map(|m| match m {
                EvalArg::OneStep => EvalChoice::OneStep,
                EvalArg::FreeRun => EvalChoice::FreeRun,
                EvalArg::Filter => EvalChoice::Filter,
            });
            commands::eval(model, data, choice, cli.seed, &io)
        }
    }
}

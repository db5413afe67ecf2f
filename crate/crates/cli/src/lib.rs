//! Command-line driver for relative edge response experiments.
//!
//! ```text
//! rer sweep --config table2.json --out table2.csv --jobs 4
//! rer calibrate --out correction.json
//! rer optical-compare --out optical.csv
//! ```

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Config, Mode, SweepKind};
use crate::error::{CliError, CliResult};
use crate::output::Sink;

#[derive(Debug, Parser)]
#[command(name = "rer", version, about = "Relative edge response experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON experiment config; every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file; overrides the config's output_path. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the config's mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,

    /// Worker threads for sweeps. Defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the configured edge chip, blurred by the configured pipeline.
    GenEdge,
    /// Blur and bin a chip read from a headerless CSV matrix.
    Blur {
        #[arg(long)]
        input: PathBuf,
    },
    /// Measure RER of a chip read from a headerless CSV matrix.
    MeasureRer {
        #[arg(long)]
        input: PathBuf,
    },
    /// Closed-form RER predictions for the configured pipeline.
    PredictRer,
    /// Run the sweep named by the config's sweep_kind.
    Sweep,
    /// Fit the Lorentzian pixel correction.
    Calibrate,
    /// Simulate the configured optical PSF.
    SimulatePsf,
    /// RER of optical PSFs against their Gaussian fits over the optical grid.
    OpticalCompare,
}

pub fn load_config(cli: &Cli) -> CliResult<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(out) = &cli.out {
        config.output_path = Some(out.clone());
    }
    Ok(config)
}

/// Runs one invocation and returns the primary output bytes.
pub fn run(cli: &Cli) -> CliResult<Vec<u8>> {
    let mut config = load_config(cli)?;
    let sink = match &config.output_path {
        Some(p) => Sink::File(p.clone()),
        None => Sink::Stdout,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenEdge => commands::gen_edge(&config, &sink),
        Command::Blur { input } => commands::blur(&config, input, &sink),
        Command::MeasureRer { input } => commands::measure_rer(&config, input, &sink),
        Command::PredictRer => commands::predict_rer(&config, &sink),
        Command::Sweep => commands::sweep(&config, &sink),
        Command::Calibrate => {
            config.sweep_kind = SweepKind::Calibrate;
            commands::calibrate(&config, &sink)
        }
        Command::SimulatePsf => commands::simulate_psf_cmd(&config, &sink),
        Command::OpticalCompare => {
            config.sweep_kind = SweepKind::OpticalCompare;
            commands::optical_compare(&config, &sink)
        }
    })
}

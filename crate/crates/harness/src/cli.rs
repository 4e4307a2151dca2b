//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;

use crate::config::{parse_tau_grid, Config};
use crate::error::{HarnessError, Result};
use crate::experiments::Experiment;
use crate::report::Outcome;

#[derive(Debug, Parser)]
#[command(name = "udrra", version, about = "Run one tabular RLHF experiment and write its reports")]
pub struct Args {
    /// equivalence, decomposition, tau_sweep, smoothness, data_selection,
    /// tau_to_delta or omega_zoo
    pub experiment: String,
    /// TOML config file (JSON if the name ends in .json)
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: the config's `out`, else out/<experiment>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated temperatures, e.g. 0.5,1,2
    #[arg(long = "tau-grid")]
    pub tau_grid: Option<String>,
}

/// Parses arguments, runs the experiment and writes its files. Returns the
/// outcome and the directory written to.
pub fn execute<I, T>(argv: I) -> Result<(Outcome, PathBuf)>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return Err(HarnessError::Usage(e.to_string())),
    };
    let experiment: Experiment = args.experiment.parse()?;
    let mut config = Config::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(grid) = &args.tau_grid {
        config.tau_grid = Some(parse_tau_grid(grid)?);
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let resolved = config.resolve(experiment)?;
    let outcome = experiment.run(&resolved)?;
    outcome.write(&out)?;
    Ok((outcome, out))
}

//! Command-line entry point for the grid-of-beams detection toolbox.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use beamgrid::cli::{
    cmd_beamset, cmd_design, cmd_metrics, cmd_pep, cmd_simulate, LoadedConfig, Overrides,
};

#[derive(Parser)]
#[command(
    name = "beamgrid",
    version,
    about = "Beam dictionaries, sequence mapping design, analytic error probabilities, and \
             Monte Carlo link simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the mapping metrics of a beam set / sequence map pair.
    Metrics(Common),
    /// Design a sequence mapping by randomized search and save it.
    Design(Common),
    /// Tabulate analytic pairwise error probabilities as CSV.
    Pep(Common),
    /// Run a Monte Carlo error/MSE sweep over an SNR grid.
    Simulate(Common),
    /// Build a beam set and save it in the text matrix format.
    Beamset(Common),
}

#[derive(Args)]
struct Common {
    /// Structured config file; flags below override its values.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            trials: self.trials,
            snr_db: self.snr_db.clone(),
            threads: self.threads,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&LoadedConfig, &Overrides) -> beamgrid::Result<()>) =
        match &cli.command {
            Command::Metrics(c) => (c, cmd_metrics),
            Command::Design(c) => (c, cmd_design),
            Command::Pep(c) => (c, cmd_pep),
            Command::Simulate(c) => (c, cmd_simulate),
            Command::Beamset(c) => (c, cmd_beamset),
        };
    let loaded = match LoadedConfig::load(&common.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match run(&loaded, &common.overrides()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

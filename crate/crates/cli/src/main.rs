//! `placeconn`: command-line driver for the place connectivity pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::SharedFlags;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file; exit code 2.
    Config(String),
    /// Unreadable or invalid input data; exit code 3.
    Data(String),
}

impl From<placeconn::Error> for CliError {
    fn from(e: placeconn::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "placeconn", version, about = "Place connectivity from geotagged event logs")]
struct Cli {
    #[command(flatten)]
    shared: SharedFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter NDJSON events into the presence store (presence.csv).
    Ingest {
        /// Event files, one JSON object per line; `-` reads stdin.
        events: Vec<PathBuf>,
    },
    /// Place connectivity matrix (pci.csv) from the presence store.
    Pci {
        /// Presence store; defaults to <out>/presence.csv.
        #[arg(long)]
        presence: Option<PathBuf>,
        /// Also write days.csv, users.csv and shared.csv.
        #[arg(long)]
        tables: bool,
    },
    /// Person-day movement matrix (od.csv).
    Movement {
        /// Presence store for the all-pairs rule; defaults to <out>/presence.csv.
        #[arg(long)]
        presence: Option<PathBuf>,
        /// Visit log for --transitions; defaults to <out>/visits.csv.
        #[arg(long)]
        visits: Option<PathBuf>,
        /// Directed flows (origin,destination,count,date) to aggregate to
        /// --level and symmetrize instead.
        #[arg(long)]
        flows: Option<PathBuf>,
    },
    /// Average-linkage communities on inverse PCI.
    Cluster {
        /// PCI matrix; defaults to <out>/pci.csv.
        #[arg(long)]
        pci: Option<PathBuf>,
    },
    /// Pearson correlation between two pair datasets, overall and per place.
    Correlate {
        /// First dataset: a PCI matrix, movement matrix or place_i,place_j,value CSV.
        a: PathBuf,
        /// Second dataset, same formats.
        b: PathBuf,
        /// Correlate raw values instead of log10(value * scale).
        #[arg(long)]
        raw: bool,
    },
    /// OLS regression report (regression.json, regression.txt).
    Regress {
        /// PCI matrix for the pair model; defaults to <out>/pci.csv.
        #[arg(long)]
        pci: Option<PathBuf>,
        /// Per-place outcome table `place,outcome[,covariate...]`.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Focal place whose pair values join the covariate table.
        #[arg(long, requires = "covariates")]
        focal: Option<String>,
        /// Pair dataset joined for --focal; defaults to the PCI matrix.
        #[arg(long, requires = "focal")]
        pairs: Option<PathBuf>,
    },
    /// Power-law distance decay of PCI.
    Decay {
        /// PCI matrix; defaults to <out>/pci.csv.
        #[arg(long)]
        pci: Option<PathBuf>,
        /// Fit only pairs in different regions.
        #[arg(long)]
        cross_region: bool,
        /// Also fit each place against its partners (decay_by_place.csv).
        #[arg(long)]
        per_place: bool,
    },
    /// GeoJSON map of community assignments or per-place values.
    ExportGeojson {
        /// `place,community` CSV from `cluster`.
        #[arg(long, conflicts_with = "values", required_unless_present = "values")]
        communities: Option<PathBuf>,
        /// `place,value` CSV (extra columns ignored).
        #[arg(long)]
        values: Option<PathBuf>,
    },
    /// Static HTML summary of the outputs found in the output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.shared, cli.command) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

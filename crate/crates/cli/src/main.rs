//! `tripgraph` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error, 4 I/O error.

mod commands;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tripgraph", version, about = "Evolving-graph analysis of taxi trip records")]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the JSON run report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, clean and store trip CSVs as a graph directory.
    Ingest(IngestArgs),
    /// Top-k locations by in/out degree per window.
    Hotspots(HotspotArgs),
    /// Popular routes: trips grouped by source, destination and pickup window.
    Routes(RouteArgs),
    /// Location and trip counts per window.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Trip CSV files, read in the order given.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output graph directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Decimal digits kept in coordinates (4 = 10 m, 3 = 100 m, 2 = 1000 m).
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub digits: u8,
    /// JSON column map; defaults to the 2015-2016 yellow-cab schema.
    #[arg(long)]
    pub column_map: Option<PathBuf>,
    /// Input files have no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Field delimiter.
    #[arg(long)]
    pub delimiter: Option<char>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    In,
    Out,
    Both,
}

#[derive(Debug, Args)]
pub struct HotspotArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub digits: u8,
    /// `month`, `span`, or a window length in seconds.
    #[arg(long, default_value = "span")]
    pub window: String,
    /// Alignment of fixed-length windows, `YYYY-MM-DD HH:MM:SS`.
    #[arg(long)]
    pub origin: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    pub direction: DirectionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub digits: u8,
    /// Simultaneity window in seconds.
    #[arg(long, default_value_t = 600)]
    pub window_seconds: i64,
    /// Alignment of the windows, `YYYY-MM-DD HH:MM:SS` (default: epoch).
    #[arg(long)]
    pub window_origin: Option<String>,
    /// Restrict to trips picked up in this calendar month, `YYYY-MM`.
    #[arg(long)]
    pub month: Option<String>,
    /// Keep only the first N route rows (and N route pairs in the GeoJSON).
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write simultaneous-trip statistics as JSON.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Write the most frequent route pairs as a GeoJSON FeatureCollection.
    #[arg(long)]
    pub geojson: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub digits: u8,
    /// `month` or `span`.
    #[arg(long, default_value = "span")]
    pub window: String,
    /// Optional per-window CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    let report = match &cli.command {
        Command::Ingest(args) => commands::ingest(args)?,
        Command::Hotspots(args) => commands::hotspots(args)?,
        Command::Routes(args) => commands::routes(args)?,
        Command::Stats(args) => commands::stats(args)?,
    };
    let json = report.to_json();
    match &cli.report {
        Some(path) => std::fs::write(path, json).map_err(|e| CliError::io(path, e))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tripgraph: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `voltgrid` command line: ingest → forecast → dispatch → report.
//!
//! Every command writes into an output directory; CSV carries series between
//! commands and JSON carries scalars. Floats are written with 12 significant
//! digits so reruns are byte-identical.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 numerical failure.

mod commands;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voltgrid::forecast::ForecastError;
use voltgrid::storage::StorageError;
use voltgrid::volterra::VolterraError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "voltgrid", version, about = "Storage dispatch from load forecasts")]
pub struct Cli {
    /// Seed recorded in every output and used by the stochastic models.
    #[arg(long, global = true, env = "VOLTGRID_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align hourly input files into one dataset.
    Ingest(IngestArgs),
    /// Block cross-validate a load forecasting model.
    Forecast(ForecastArgs),
    /// Solve for the storage power that balances the inputs.
    Dispatch(DispatchArgs),
    /// Compare several dispatch runs on a common grid.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Hourly load CSV.
    #[arg(long)]
    pub load: PathBuf,
    /// Conventional generation CSV.
    #[arg(long)]
    pub gen: Option<PathBuf>,
    /// Renewable generation CSV.
    #[arg(long)]
    pub res: Option<PathBuf>,
    /// Temperature CSV; repeat for several sites.
    #[arg(long = "temp")]
    pub temps: Vec<PathBuf>,
    /// Holiday list, one YYYY-MM-DD per line.
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    /// chrono format of the input timestamps (default: RFC 3339 or `YYYY-MM-DD HH:MM[:SS]`).
    #[arg(long)]
    pub time_format: Option<String>,
    /// Timestamp column of every input (default: first column).
    #[arg(long)]
    pub timestamp_column: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Lm,
    Rf,
    Gbdt,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Dataset written by `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelName,
    /// Hours between forecast origin and target.
    #[arg(long, default_value_t = 24)]
    pub horizon: usize,
    #[arg(long, default_value_t = 5)]
    pub blocks: usize,
    /// Rows held out for validation at the end of the dataset.
    #[arg(long, default_value_t = 8760)]
    pub tail: usize,
    /// Trees (rf) or boosting stages (gbdt).
    #[arg(long)]
    pub trees: Option<usize>,
    /// Features sampled per split (rf).
    #[arg(long)]
    pub mtry: Option<usize>,
    /// L2 penalty (lm).
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long, default_value = "load")]
    pub load_column: String,
    /// Holiday list; defaults to `holidays.txt` next to the dataset.
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DispatchArgs {
    /// Load CSV: a dataset, a forecast, or any `timestamp,value` file.
    #[arg(long)]
    pub load: PathBuf,
    /// Defaults to `predicted`, then `load`, then the second column.
    #[arg(long)]
    pub load_column: Option<String>,
    /// Conventional generation; zero when omitted.
    #[arg(long)]
    pub gen: Option<PathBuf>,
    #[arg(long)]
    pub gen_column: Option<String>,
    /// Renewable generation; zero when omitted.
    #[arg(long)]
    pub res: Option<PathBuf>,
    #[arg(long)]
    pub res_column: Option<String>,
    /// Kernel JSON; default is one storage with K ≡ 0.92, G = x.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Storage JSON (bounds, efficiency, rated cycles).
    #[arg(long)]
    pub storage: Option<PathBuf>,
    /// Grid intervals; uses the first N+1 aligned samples.
    #[arg(long = "grid-N")]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `dispatch.csv` files; the first is the reference.
    #[arg(long, num_args = 1.., required = true)]
    pub dispatch: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<VolterraError>() {
            if e.is_numerical() {
                return EXIT_NUMERICAL;
            }
        }
        if let Some(StorageError::Solve(e)) = cause.downcast_ref::<StorageError>() {
            if e.is_numerical() {
                return EXIT_NUMERICAL;
            }
        }
        if let Some(ForecastError::RankDeficient { .. } | ForecastError::NonFinite(_)) =
            cause.downcast_ref::<ForecastError>()
        {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_USAGE
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(args) => commands::ingest(args, cli.seed),
        Command::Forecast(args) => commands::forecast(args, cli.seed),
        Command::Dispatch(args) => commands::dispatch(args, cli.seed),
        Command::Report(args) => commands::report(args, cli.seed),
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

//! Command line front end: argument parsing, run configuration, reports.
//!
//! Every run produces a [`Report`] that echoes the full [`RunConfig`]. Feeding
//! that report back through `leanreg replay` reproduces the results block byte
//! for byte, whatever the thread count.

mod commands;
mod csvio;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::run_command;
pub use csvio::{read_csv, write_csv, LabeledDataset, INTERCEPT_NAME};

use crate::bootstrap::{WeightDist, DEFAULT_REPLICATES};
use crate::error::{Error, ErrorClass, Result};
use crate::simlab::DgpKind;
use crate::variance::VarianceMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Fit,
    Test,
    Bootstrap,
    Simulate,
    Check,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFlag {
    Classical,
    #[default]
    Hc0,
    Hc1,
}

impl From<VarianceFlag> for VarianceMethod {
    fn from(v: VarianceFlag) -> Self {
        match v {
            VarianceFlag::Classical => VarianceMethod::Classical,
            VarianceFlag::Hc0 => VarianceMethod::SandwichHc0,
            VarianceFlag::Hc1 => VarianceMethod::SandwichHc1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightsFlag {
    #[default]
    Gaussian,
    Rademacher,
}

impl From<WeightsFlag> for WeightDist {
    fn from(w: WeightsFlag) -> Self {
        match w {
            WeightsFlag::Gaussian => WeightDist::Gaussian,
            WeightsFlag::Rademacher => WeightDist::Rademacher,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceFlag {
    #[default]
    Normal,
    T,
    Bootstrap,
}

fn parse_dgp(s: &str) -> std::result::Result<DgpKind, String> {
    s.parse::<DgpKind>().map_err(|e| e.to_string())
}

/// Everything a run depends on. Serialized verbatim into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub add_intercept: bool,
    pub variance: VarianceFlag,
    pub weights: WeightsFlag,
    #[serde(rename = "B")]
    pub b: usize,
    /// Resample size; when set the bootstrap is m-of-n resampling.
    pub m: Option<usize>,
    pub alpha: f64,
    pub reference: ReferenceFlag,
    /// Single coordinate for `test`; absent means the max-|t| test.
    pub coord: Option<usize>,
    /// Null value(s) for `test`; defaults to zero.
    pub null: Option<Vec<f64>>,
    pub dgp: Option<DgpKind>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            data: None,
            response: None,
            add_intercept: false,
            variance: VarianceFlag::Hc0,
            weights: WeightsFlag::Gaussian,
            b: DEFAULT_REPLICATES,
            m: None,
            alpha: 0.05,
            reference: ReferenceFlag::Normal,
            coord: None,
            null: None,
            dgp: None,
            n: None,
            reps: None,
            n_grid: None,
            seed: None,
            threads: None,
            out: None,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match self.command {
            Command::Fit => false,
            Command::Test => self.reference == ReferenceFlag::Bootstrap,
            Command::Bootstrap | Command::Simulate | Command::Check => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.is_stochastic() && self.seed.is_none() {
            return Err(Error::InvalidArgument("this command is stochastic: pass --seed or set LEANREG_SEED".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub class: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        let class = match e.class() {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numerical => "numerical",
        };
        ErrorReport {
            kind: e.kind().to_string(),
            class: class.to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: Command,
    pub config: RunConfig,
    pub results: Option<serde_json::Value>,
    pub warnings: Vec<String>,
    pub error: Option<ErrorReport>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, |e| e.exit_code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

#[derive(Debug, Parser)]
#[command(name = "leanreg", version, about = "Assumption-lean inference for least squares")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Fit least squares; report classical and sandwich standard errors
    Fit(Opts),
    /// t test of one coordinate (--coord) or max-|t| test of the whole vector
    Test(Opts),
    /// Score bootstrap rectangle and ellipsoid confidence regions
    Bootstrap(Opts),
    /// Monte Carlo coverage (and optional consistency) study on a named DGP
    Simulate(Opts),
    /// Deterministic inequality and linear-representation remainder on a named DGP
    Check(Opts),
    /// Re-run the configuration echoed in a report (or a bare config file)
    Replay {
        config: PathBuf,
        /// Worker threads; does not change results
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// Input CSV with a header row
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name of the response column
    #[arg(long)]
    pub response: Option<String>,
    /// Prepend a column of ones to the design
    #[arg(long)]
    pub add_intercept: bool,
    #[arg(long, value_enum, default_value_t = VarianceFlag::Hc0)]
    pub variance: VarianceFlag,
    #[arg(long, value_enum, default_value_t = WeightsFlag::Gaussian)]
    pub weights: WeightsFlag,
    /// Bootstrap replicates
    #[arg(long = "B", default_value_t = DEFAULT_REPLICATES)]
    pub b: usize,
    /// Resample size; switches to the m-of-n resampling bootstrap
    #[arg(long = "m")]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ReferenceFlag::Normal)]
    pub reference: ReferenceFlag,
    /// Coordinate for a single t test (0-based)
    #[arg(long)]
    pub coord: Option<usize>,
    /// Null value(s), comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub null: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_dgp)]
    pub dgp: Option<DgpKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Sample sizes for a consistency study, comma separated
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, env = "LEANREG_SEED")]
    pub seed: Option<u64>,
    /// Output path (JSON; `simulate` also writes a CSV next to it)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; does not change results
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Opts {
    pub fn into_config(self, command: Command) -> RunConfig {
        RunConfig {
            command,
            data: self.data,
            response: self.response,
            add_intercept: self.add_intercept,
            variance: self.variance,
            weights: self.weights,
            b: self.b,
            m: self.m,
            alpha: self.alpha,
            reference: self.reference,
            coord: self.coord,
            null: self.null,
            dgp: self.dgp,
            n: self.n,
            reps: self.reps,
            n_grid: self.n_grid,
            seed: self.seed,
            threads: self.threads,
            out: self.out,
        }
    }
}

/// Reads a config from either a bare `RunConfig` or a full report.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = value.get("config").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

/// Runs `config` on a pool of `config.threads` workers (rayon's default when absent).
pub fn run_with_threads(config: RunConfig) -> Report {
    match config.threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run_command(config)),
            Err(e) => commands::failed(config, Error::InvalidArgument(format!("cannot start thread pool: {e}"))),
        },
        _ => run_command(config),
    }
}

/// Process entry point; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let config = match cli.command {
        CliCommand::Fit(o) => o.into_config(Command::Fit),
        CliCommand::Test(o) => o.into_config(Command::Test),
        CliCommand::Bootstrap(o) => o.into_config(Command::Bootstrap),
        CliCommand::Simulate(o) => o.into_config(Command::Simulate),
        CliCommand::Check(o) => o.into_config(Command::Check),
        CliCommand::Replay { config, threads } => match load_config(&config) {
            Ok(mut c) => {
                if threads.is_some() {
                    c.threads = threads;
                }
                c
            }
            Err(e) => {
                let err = ErrorReport::from(&e);
                eprintln!("{}", serde_json::to_string_pretty(&serde_json::json!({ "error": err })).unwrap());
                return e.exit_code();
            }
        },
    };
    let report = run_with_threads(config);
    println!("{}", report.to_json());
    if let Some(e) = &report.error {
        eprintln!("error: {}", e.message);
    }
    report.exit_code()
}

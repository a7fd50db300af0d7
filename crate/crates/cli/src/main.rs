//! `hmg`: batch runner for scheduling, attack simulation, forecasting,
//! detection and telemetry decoding.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use report::Format;

#[derive(Debug, Parser)]
#[command(name = "hmg", version, about = "Hybrid ac/dc microgrid co-simulation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Commitment and dispatch over the scenario horizon.
    Schedule,
    /// Replay a falsified-measurement scenario against a baseline dispatch.
    Attack,
    /// Train the forecaster and score it against LSTM and ANN baselines.
    Train,
    /// Run measured/forecast pairs or meter readings through the detector.
    Detect,
    /// Decode a hex dump of a PHY, MAC or raw reading frame.
    CodecInspect,
    /// Derive LE, UE and P0 from a clean residual history.
    Calibrate,
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// Scenario CSV (hour,ac_load_factor,dc_load_kw,wt_pattern,pv_pattern)
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Network JSON
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Attack spec JSON
    #[arg(long, global = true)]
    pub attack_spec: Option<PathBuf>,
    /// Forecaster checkpoint JSON
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Subcommand parameters JSON
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Subcommand data file
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, env = "HMG_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Exit status 1: the request itself is wrong. Exit status 2: valid input
/// that failed while running or writing results.
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Invalid(e) | Failure::Runtime(e) => e,
        }
    }
}

pub trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Schedule => commands::schedule(&cli.opts),
        Command::Attack => commands::attack(&cli.opts),
        Command::Train => commands::train(&cli.opts),
        Command::Detect => commands::detect(&cli.opts),
        Command::CodecInspect => commands::codec_inspect(&cli.opts),
        Command::Calibrate => commands::calibrate(&cli.opts),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

//! `wattcast` — batch CLI for short-term GPU power forecasting.
//!
//! Subcommands follow the workflow stages: `synth` generates a trace,
//! `train` fits a forecaster, `predict` / `evaluate` / `export-plot`
//! apply a checkpoint. Exit codes: 0 success, 2 configuration error,
//! 3 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use wattcast::eval::EvalError;
use wattcast::ingest::IngestError;
use wattcast::nn::{Architecture, NnError};
use wattcast::preprocess::PreprocessError;
use wattcast::series::SeriesError;
use wattcast::synth::SynthError;
use wattcast::train::TrainError;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration (file or flags): exit code 2.
    Config(String),
    /// Bad or insufficient input data: exit code 3.
    Data(String),
}

impl CliError {
    fn config(message: String) -> Self {
        CliError::Config(message)
    }

    fn data(message: String) -> Self {
        CliError::Data(message)
    }

    fn data_from(err: impl std::fmt::Display) -> Self {
        CliError::Data(err.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(err: SynthError) -> Self {
        match err {
            SynthError::BadConfig(_) => CliError::Config(err.to_string()),
            SynthError::Series(_) => CliError::Data(err.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(err: PreprocessError) -> Self {
        match err {
            PreprocessError::BadRatios(..) | PreprocessError::BadWindowShape => {
                CliError::Config(err.to_string())
            }
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match &err {
            TrainError::BadConfig(_) | TrainError::Nn(NnError::BadHyper(_)) => {
                CliError::Config(err.to_string())
            }
            TrainError::Preprocess(inner) => CliError::from(inner.clone()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(err: IngestError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<SeriesError> for CliError {
    fn from(err: SeriesError) -> Self {
        CliError::Data(err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "wattcast",
    version,
    about = "Short-term data-center GPU power forecasting",
    propagate_version = true
)]
struct Cli {
    /// INI config file with [synth], [preprocess], and [train] sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload trace CSV.
    Synth {
        /// Output trace path (`t_seconds,power_watts`).
        #[arg(long)]
        out: PathBuf,
        /// Trace length in seconds.
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a forecaster on a trace or raw power log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        checkpoint_out: PathBuf,
        /// History CSV path (defaults to `<checkpoint>_history.csv`).
        #[arg(long, value_name = "PATH")]
        history_out: Option<PathBuf>,
        /// FC_LSTM, GRU, or 1D_CNN.
        #[arg(long)]
        arch: Option<String>,
        /// History samples fed to the model.
        #[arg(long)]
        lookback: Option<usize>,
        /// Steps predicted ahead.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        hidden_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Forecast from history ending at a sample index.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Index of the last observed sample.
        #[arg(long)]
        t_index: usize,
        /// Output JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on the chronological test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        metrics_out: PathBuf,
        #[arg(long, value_name = "PATH")]
        residuals_out: PathBuf,
    },
    /// Export aligned actual/predicted rows from the test split.
    ExportPlot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Window start in trace seconds; full test trace when omitted.
        #[arg(long)]
        range_start: Option<f64>,
        /// Window length in seconds.
        #[arg(long)]
        range_len: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };

    match cli.command {
        Command::Synth {
            out,
            duration,
            seed,
        } => {
            if let Some(duration) = duration {
                config.synth.duration_s = duration;
            }
            if let Some(seed) = seed {
                config.synth.seed = seed;
            }
            commands::cmd_synth(&config, &out)
        }
        Command::Train {
            data,
            checkpoint_out,
            history_out,
            arch,
            lookback,
            horizon,
            seed,
            epochs,
            batch_size,
            learning_rate,
            hidden_size,
            patience,
        } => {
            if let Some(arch) = arch {
                config.architecture = arch
                    .parse::<Architecture>()
                    .map_err(|e| CliError::config(format!("--arch: {e}")))?;
            }
            if let Some(v) = lookback {
                config.lookback = v;
            }
            if let Some(v) = horizon {
                config.horizon = v;
            }
            if let Some(v) = seed {
                config.train_seed = v;
            }
            if let Some(v) = epochs {
                config.max_epochs = v;
            }
            if let Some(v) = batch_size {
                config.batch_size = v;
            }
            if let Some(v) = learning_rate {
                config.learning_rate = v;
            }
            if let Some(v) = hidden_size {
                config.hidden_size = v;
            }
            if let Some(v) = patience {
                config.patience = v;
            }
            commands::cmd_train(&config, &data, &checkpoint_out, history_out.as_deref())
        }
        Command::Predict {
            checkpoint,
            data,
            t_index,
            out,
        } => commands::cmd_predict(&checkpoint, &data, t_index, out.as_deref()),
        Command::Evaluate {
            checkpoint,
            data,
            metrics_out,
            residuals_out,
        } => commands::cmd_evaluate(&config, &checkpoint, &data, &metrics_out, &residuals_out),
        Command::ExportPlot {
            checkpoint,
            data,
            out,
            range_start,
            range_len,
        } => commands::cmd_export_plot(&config, &checkpoint, &data, &out, range_start, range_len),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err)
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{err}");
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            eprint!("{err}");
            return ExitCode::from(2);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}

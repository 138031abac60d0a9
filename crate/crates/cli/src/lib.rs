//! The `docbin` command line: synthetic data, training, binarization,
//! classical baselines and evaluation.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(docbin::Error),
}

impl From<docbin::Error> for CliError {
    fn from(e: docbin::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(docbin::Error::InvalidArgument(_)) => EXIT_USAGE,
            CliError::Core(docbin::Error::NonFinite { .. }) => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "docbin", version, about = "Two-stage adversarial document binarization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic degraded documents, their ground truth and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        /// Black text on white paper, without noise or stains.
        #[arg(long)]
        noiseless: bool,
    },
    /// Train both stages on a manifest and write checkpoints and loss histories.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Binarize images with trained checkpoints.
    Binarize {
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the enhanced image and the local and global maps.
        #[arg(long)]
        debug: bool,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score predictions against a manifest, or run k-fold training and evaluation.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory holding one `{id}.png` prediction per manifest entry.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON object mapping ids to `{"pred": ..., "gt": ...}` transcripts.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Train and evaluate on this many folds instead of reading predictions.
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Binarize images with a classical global or local threshold.
    Baseline {
        /// One of otsu, niblack, sauvola.
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { out, count, seed, width, height, noiseless } => {
            commands::synth(&out, count, seed, width, height, noiseless)
        }
        Command::Train { manifest, out, overrides } => commands::train(manifest, out, &overrides),
        Command::Binarize { model, out, debug, overrides, inputs } => {
            commands::binarize(&model, &out, debug, &overrides, &inputs)
        }
        Command::Evaluate { manifest, pred, out, transcripts, folds, overrides } => {
            commands::evaluate(manifest, pred, out, transcripts, folds, &overrides)
        }
        Command::Baseline { method, out, inputs } => commands::baseline(&method, &out, &inputs),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("docbin: {e}");
            e.exit_code()
        }
    }
}

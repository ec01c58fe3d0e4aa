//! The `iotprint` command line: argument parsing, exit codes and dispatch.
//!
//! Exit status is 0 on success, 1 for usage or configuration problems and
//! 2 for data or format problems.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::capture::CaptureError;
use crate::classify::ClassifyError;
use crate::dataset::DatasetError;
use crate::nn::ModelError;
use crate::report::ReportError;

pub use commands::{
    cmd_detect_unknown, cmd_encode, cmd_eval, cmd_split, cmd_synth, cmd_train, SavedModel, SessionEntry,
    SessionStore, SourceSummary, DETECT_SUMMARY, MODEL_FILE, PROFILE_FILE, RUN_FILE, SESSIONS_FILE, SUMMARY_FILE,
    VERDICTS_FILE,
};
pub use config::PipelineConfig;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
}

/// A failure tagged with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self { kind: ErrorKind::Usage, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self { kind: ErrorKind::Data, error: anyhow::anyhow!("{msg}") }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => EXIT_USAGE,
            ErrorKind::Data => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        Self { kind: ErrorKind::Data, error }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { kind: ErrorKind::Data, error: e.into() }
    }
}

impl From<CaptureError> for CliError {
    fn from(e: CaptureError) -> Self {
        let kind = if matches!(e, CaptureError::Config(_)) { ErrorKind::Usage } else { ErrorKind::Data };
        Self { kind, error: e.into() }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self { kind: ErrorKind::Data, error: e.into() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = if matches!(e, ModelError::Config(_)) { ErrorKind::Usage } else { ErrorKind::Data };
        Self { kind, error: e.into() }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Model(m) => m.into(),
            ClassifyError::Config(_) => Self { kind: ErrorKind::Usage, error: e.into() },
            ClassifyError::Data(_) => Self { kind: ErrorKind::Data, error: e.into() },
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        Self { kind: ErrorKind::Data, error: e.into() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "iotprint", version, about = "IoT device identification from TCP session payloads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split pcaps into TCP sessions and label them by initiator MAC.
    Split(SplitArgs),
    /// Turn a session store into a deduplicated 784-byte IDX dataset.
    Encode(EncodeArgs),
    /// Train a classifier; with --exclude, also derive a rejection threshold.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// Classify fingerprints with a threshold profile, flagging unknowns.
    DetectUnknown(DetectArgs),
    /// Write synthetic device captures and their MAC map.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON pipeline configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for splitting, initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(required = true)]
    pub pcaps: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON object of "mac": "label"; defaults to the built-in device table.
    #[arg(long)]
    pub mac_map: Option<PathBuf>,
    /// Label unmapped MACs as "Non-IoT devices" instead of "unmapped".
    #[arg(long)]
    pub collapse_non_iot: bool,
    /// Also write one pcap per session under pcaps/.
    #[arg(long)]
    pub session_pcaps: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory written by `split`.
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write each fingerprint as a PGM image.
    #[arg(long)]
    pub images: bool,
    /// Also write PNG copies of the images.
    #[arg(long, requires = "images")]
    pub png: bool,
    /// Keep only labels with strictly more sessions than this.
    #[arg(long)]
    pub min_sessions: Option<usize>,
    /// Comma-separated class order.
    #[arg(long, value_delimiter = ',')]
    pub label_order: Option<Vec<String>>,
    /// Leave a label out of the dataset.
    #[arg(long = "drop-label")]
    pub drop_labels: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `encode`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Hold a label out of training, or `all` to hold out each in turn.
    #[arg(long)]
    pub exclude: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs of the selection pass; the best validation epoch is kept.
    #[arg(long)]
    pub selection_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub threshold_grid_step: Option<f64>,
    /// Require the full-size class counts.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Which part of the dataset to score, split with the model's seeds.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub devices: usize,
    #[arg(long, default_value_t = 1200)]
    pub sessions: usize,
    #[arg(long, default_value_t = 2)]
    pub files: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Split(a) => cmd_split(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::DetectUnknown(a) => cmd_detect_unknown(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Parse `args`, run the command and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

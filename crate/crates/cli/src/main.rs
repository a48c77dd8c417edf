//! `throwintent`: every pipeline stage as a subcommand.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use throwintent::data::View;
use throwintent::eval::Task;

#[derive(Debug, Parser)]
#[command(name = "throwintent", version, about = "Intent recognition for target throwing: synthesis, feature extraction, training and evaluation")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "THROW_INTENT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic datasets.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Find the throw frame in a pose sequence.
    DetectThrow(DetectArgs),
    /// Track the ball around the throw frame and build outcome features.
    TrackBall(TrackArgs),
    /// Train the outcome or congruence model, or build the prior matrix.
    Train(TrainArgs),
    /// Predict the intent of one throw.
    Predict(PredictArgs),
    /// Cross-validate a task and report per-fold and summary metrics.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Write a synthetic dataset with manifest and ground truth.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Comma-separated camera views.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<View>>,
    /// Exact aim and speed, no keypoint jitter or dropout.
    #[arg(long)]
    pub noiseless: bool,
    /// Fixed reaction intensity for every subject.
    #[arg(long)]
    pub reaction_intensity: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long, default_value = "deg0")]
    pub view: View,
    /// Detection config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub pose: PathBuf,
    /// Ball clip: scene description or frame window (JSON).
    #[arg(long)]
    pub ball: PathBuf,
    #[arg(long, default_value = "deg0")]
    pub view: View,
    /// Skip detection and use this throw frame.
    #[arg(long)]
    pub throw_frame: Option<usize>,
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Outcome,
    Congruence,
    Prior,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Camera view whose records are used.
    #[arg(long)]
    pub view: Option<View>,
    /// Experiment config (JSON) with `pipeline` and `eval` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Weights file (models) or JSON file (prior).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long)]
    pub ball: PathBuf,
    #[arg(long)]
    pub reaction: PathBuf,
    #[arg(long, default_value = "deg0")]
    pub view: View,
    #[arg(long)]
    pub outcome_weights: PathBuf,
    #[arg(long)]
    pub congruence_weights: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Outcome,
    Congruence,
    Intent,
    EndToEnd,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Outcome => Task::Outcome,
            TaskArg::Congruence => Task::Congruence,
            TaskArg::Intent => Task::Intent,
            TaskArg::EndToEnd => Task::EndToEnd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Learned,
    Oracle,
    Random,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Source of outcome predictions in end-to-end runs.
    #[arg(long, value_enum)]
    pub outcome_predictor: Option<PredictorArg>,
    /// Source of congruence predictions in end-to-end runs.
    #[arg(long, value_enum)]
    pub congruence_predictor: Option<PredictorArg>,
    /// Folds trained in parallel; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let code = commands::run(std::env::args_os());
    ExitCode::from(code as u8)
}

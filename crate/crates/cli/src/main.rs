//! `seal`: generate synthetic data, train fragment-attributed models,
//! explain and evaluate them, and render atom-level explanations.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use seal_core::datagen::SyntheticTask;
use seal_core::explain::{MaskStrategy, Method};
use seal_core::sealnet::Task;

#[derive(Debug, Parser)]
#[command(name = "seal", version, about = "Fragment-attributed graph neural networks for molecules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset (JSONL).
    Gen(GenArgs),
    /// Print the fragment decomposition of molecules.
    Fragment(FragmentArgs),
    /// Train a model, selecting λ by cross-validation.
    Train(TrainArgs),
    /// Attribute predictions to atoms and fragments (JSONL).
    Explain(ExplainArgs),
    /// Evaluate predictions and explanation quality.
    Eval(EvalArgs),
    /// Draw an atom-level explanation as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// X, P, B, indole or rings-count.
    #[arg(long)]
    #[serde(serialize_with = "manifest::display")]
    pub task: SyntheticTask,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pos_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ring count at which a rings-count molecule becomes positive.
    #[arg(long, default_value_t = 3)]
    pub ring_threshold: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("fragment_input").required(true).multiple(false).args(["smiles", "data"])))]
pub struct FragmentArgs {
    #[arg(long)]
    pub smiles: Option<String>,
    /// JSONL dataset; one output line per record.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("lambda_choice").required(true).multiple(false).args(["lambda", "lambda_sweep"])))]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// binary or regression.
    #[arg(long)]
    pub task: Task,
    /// Train with a single λ.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated candidates; the default grid when given without values.
    #[arg(long, num_args = 0..=1, value_delimiter = ',')]
    pub lambda_sweep: Option<Vec<f64>>,
    /// Cross-validation folds; 1 selects on a single held-out split.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Significance level of the λ selection test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    /// Fraction of the data held out for early stopping of the final model.
    #[arg(long, default_value_t = 0.1)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the CvReport JSON (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("explain_input").required(true).multiple(false).args(["smiles", "data"])))]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub smiles: Option<String>,
    /// seal, saliency, input-x-gradient or integrated-gradients.
    #[arg(long, default_value = "seal")]
    #[serde(serialize_with = "manifest::display")]
    pub method: Method,
    #[arg(long, default_value_t = 64)]
    pub ig_steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "seal")]
    #[serde(serialize_with = "manifest::display")]
    pub method: Method,
    /// Comma-separated fractions of atoms to mask.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    pub thresholds: Vec<f64>,
    /// Comma-separated subset of mask-abs, mask, abs, zero.
    #[arg(long, value_delimiter = ',', default_value = "mask-abs,mask,abs,zero")]
    #[serde(serialize_with = "manifest::display_all")]
    pub strategies: Vec<MaskStrategy>,
    #[arg(long, default_value_t = 64)]
    pub ig_steps: usize,
    /// Report path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-molecule CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("render_input").required(true).multiple(false).args(["input", "smiles"])))]
pub struct RenderArgs {
    /// JSONL written by `seal explain`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Record of `--input` to draw.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Explain and draw a single molecule (needs --model).
    #[arg(long, requires = "model")]
    pub smiles: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "seal")]
    #[serde(serialize_with = "manifest::display")]
    pub method: Method,
    #[arg(long, default_value_t = 64)]
    pub ig_steps: usize,
    /// Layout seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub title: Option<String>,
    /// SVG path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SEAL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("SEAL_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Data(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Fragment(a) => commands::fragment(a),
        Command::Train(a) => commands::train(a),
        Command::Explain(a) => commands::explain(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

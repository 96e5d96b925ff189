//! The `cmqe` pipeline: split a corpus, cache embeddings, train the boosted
//! classifier, predict and score.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
//! data and runtime failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cmqe_core::corpus::{Channel, Format};

pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod predictions;

pub use commands::{cmd_encode, cmd_evaluate, cmd_predict, cmd_split, cmd_train, TrainOutcome};
pub use config::EncoderSpec;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "cmqe",
    version,
    about = "Code-mixed quality estimation pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a corpus into train/val/test files.
    Split(SplitArgs),
    /// Encode one channel of a corpus with the reference encoder into a cache.
    Encode(EncodeArgs),
    /// Train a classifier for subtask A or B.
    Train(TrainArgs),
    /// Predict labels and class probabilities for a corpus.
    Predict(PredictArgs),
    /// Score a predictions file against gold labels.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Defaults to the corpus file extension.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<Format>,
    #[arg(long, value_parser = parse_ratios, default_value = "0.7,0.1,0.2")]
    pub ratios: [f64; 3],
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<Format>,
    #[arg(long, value_parser = parse_channel)]
    pub channel: Channel,
    #[arg(long, default_value_t = cmqe_core::embedding::DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Per-channel encoder and dimension flags shared by `train` and `predict`.
#[derive(Debug, Clone, Default, Args)]
pub struct EncoderArgs {
    /// `CHANNEL=reference` or `CHANNEL=cache:PATH`; repeatable.
    #[arg(long = "encoder", value_parser = parse_encoder_flag)]
    pub encoders: Vec<(Channel, EncoderSpec)>,
    /// Reference encoder dimension for every channel.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus; overrides the config's data section.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Train on the first part of a seeded split of the corpus.
    #[arg(long, value_parser = parse_ratios)]
    pub split: Option<[f64; 3]>,
    /// A (binned rating) or B (disagreement).
    #[arg(long)]
    pub subtask: Option<String>,
    /// Seeds the split, the reference encoder and boosting; defaults to 42.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub l2_leaf_reg: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Encoder settings; reference dimensions and seed default to the model's.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Corpus holding the gold labels.
    #[arg(long)]
    pub golds: PathBuf,
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub subtask: String,
    /// Where report.txt and report.json go.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    match s.to_ascii_lowercase().as_str() {
        "jsonl" => Ok(Format::Jsonl),
        "csv" => Ok(Format::Csv),
        other => Err(format!("unknown format `{other}` (jsonl or csv)")),
    }
}

fn parse_channel(s: &str) -> std::result::Result<Channel, String> {
    s.parse()
}

fn parse_ratios(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad ratio `{p}`: {e}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| "expected three comma-separated ratios".to_string())
}

fn parse_encoder_flag(s: &str) -> std::result::Result<(Channel, EncoderSpec), String> {
    let (c, spec) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not CHANNEL=ENCODER"))?;
    Ok((c.parse()?, spec.parse()?))
}

/// Runs a parsed command, printing a short summary on stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split(a) => {
            for p in cmd_split(&a)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Encode(a) => {
            let n = cmd_encode(&a)?;
            println!("wrote {} ({n} sentences)", a.out.display());
        }
        Command::Train(a) => {
            let out = cmd_train(&a)?;
            println!(
                "trained on {} instances, logloss {:.5} -> {:.5}; model {}",
                out.n_instances,
                out.logloss.first().copied().unwrap_or(f64::NAN),
                out.logloss.last().copied().unwrap_or(f64::NAN),
                out.model_path.display()
            );
        }
        Command::Predict(a) => {
            let n = cmd_predict(&a)?;
            println!("wrote {} ({n} predictions)", a.out.display());
        }
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&a)?;
            println!("{}", report.summary());
        }
    }
    Ok(())
}

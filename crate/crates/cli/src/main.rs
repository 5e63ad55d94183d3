//! `dartnet` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dartnet", version, about = "Joint attribute and link forecasting on dynamic attributed graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic coupled dataset (events.tsv + synth.json).
    Generate(GenerateArgs),
    /// Train a model and write best.json and train_log.jsonl.
    Train(TrainArgs),
    /// Score a checkpoint on the validation or test portion.
    Eval(EvalArgs),
    /// Roll a checkpoint forward without observing future snapshots.
    Forecast(ForecastArgs),
    /// Train every variant over several seeds and tabulate test MSE.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub ticks: Option<usize>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub density: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Directory with events.tsv or train.tsv/valid.tsv/test.tsv.
    #[arg(long)]
    pub data: PathBuf,
    /// Chronological train,valid,test fractions for single-file datasets.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub split: Vec<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelFlags {
    /// JSON training config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for the checkpoint and log.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Portion to score: valid or test.
    #[arg(long, default_value = "test")]
    pub portion: String,
    /// Optional directory for report.json and per_entity.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Snapshots observed before forecasting; defaults to train + valid.
    #[arg(long)]
    pub cut: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional directory for ablation.json and ablation.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status with a one-line reason.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub reason: String,
}

impl Failure {
    pub fn usage(reason: impl ToString) -> Self {
        Self { code: 1, kind: "usage", reason: reason.to_string() }
    }
    pub fn data(reason: impl ToString) -> Self {
        Self { code: 2, kind: "data", reason: reason.to_string() }
    }
    pub fn runtime(reason: impl ToString) -> Self {
        Self { code: 3, kind: "runtime", reason: reason.to_string() }
    }
}

fn init_logging() {
    let level = std::env::var("DARTNET_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("dartnet: error[usage]: {first}");
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let reason = f.reason.replace('\n', " ");
            eprintln!("dartnet: error[{}]: {reason}", f.kind);
            ExitCode::from(f.code)
        }
    }
}

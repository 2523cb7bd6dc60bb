//! `debias-mf`: data ingestion, SAM fitting, training and experiment tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use debias_mf::Error;

#[derive(Parser, Debug)]
#[command(name = "debias-mf", version, about = "Text-conditioned bias-corrected matrix factorization")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "DEBIAS_MF_THREADS")]
    pub threads: Option<usize>,

    /// JSON or TOML experiment file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output (info, then debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a rating file to canonical CSV and print its statistics.
    Ingest(IngestArgs),
    /// Fit text-conditioned item weights and write them as CSV.
    FitSam(FitSamArgs),
    /// Train one variant and write its factors and loss trace.
    Train(TrainArgs),
    /// Score a trained model on a rating file.
    Evaluate(EvaluateArgs),
    /// Compare variants at one train fraction, median over seeds.
    Table2(ExperimentArgs),
    /// Compare variants across train fractions.
    Sweep(ExperimentArgs),
    /// Generate a synthetic dataset with known propensities.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    /// MovieLens-100K `u.data`.
    Ml100k,
    /// MovieLens-1M `ratings.dat`.
    Ml1m,
    /// `user,item,rating` with dense indices.
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveArg {
    Spectral,
    Frobenius,
}

/// Where ratings and item text come from.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Rating file.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Raw item ids to keep, one per line.
    #[arg(long)]
    pub keep_list: Option<PathBuf>,
    /// Item text as `raw_item_id<TAB>text` lines.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Tokens per document after truncation or padding.
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
}

/// Hyperparameters that override the config file.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Latent dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Clamp predictions to the rating range when scoring.
    #[arg(long, num_args = 0..=2, value_names = ["LO", "HI"])]
    pub clip_predictions: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Rating file (alternative to --dataset).
    pub path: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for ratings.csv, users.csv, items.csv and, with
    /// --corpus, documents.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitSamArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weights CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// mf, mf_plus, convmf, convmf_plus, ftmf or ftmf_plus.
    #[arg(long, default_value = "mf")]
    pub variant: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split the dataset first and report the held-out RMSE.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Clamp predictions to the rating range.
    #[arg(long, num_args = 0..=2, value_names = ["LO", "HI"])]
    pub clip_predictions: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    pub variant: Option<Vec<String>>,
    /// Single seed; use --seeds for several.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Comma-separated train fractions for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Directory for results.csv, summary.csv and table.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Users.
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    /// Items.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    /// Observation probability of each text group; items are assigned to
    /// groups round-robin.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.8")]
    pub propensities: Vec<f64>,
    /// Output directory for synthetic.csv, synthetic.json and documents.tsv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Exit status for a library error: 2 for bad or missing data, 3 for
/// numerical failure, 1 for invalid arguments.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) | Error::Singular(_) => 3,
        Error::InvalidArgument(_) => 1,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::InvalidData(_)
        | Error::Shape { .. }
        | Error::Missing(_)
        | Error::Serde(_) => 2,
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

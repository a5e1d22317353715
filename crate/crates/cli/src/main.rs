use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod error;

use error::CliError;

#[derive(Parser)]
#[command(name = "lconf", version, about = "Label confidence for noisily labeled embeddings")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NoiseArg {
    Sym,
    Asym,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Laplace,
    Gmm,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Gaussian blobs: features, labels and ground truth.
    Synth(SynthArgs),
    /// Inject label noise into a labels CSV.
    Corrupt(CorruptArgs),
    /// Estimate per-sample label confidence.
    Estimate(EstimateArgs),
    /// Time estimation with and without PCA reduction.
    Bench(BenchArgs),
    /// Run the co-training pipeline from a JSON config.
    Pipeline(PipelineArgs),
    /// Score confidences against ground truth.
    Eval(EvalArgs),
}

#[derive(clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub sep: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_features: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
    /// Ground-truth labels; defaults to `<out-labels stem>.truth.csv`.
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub noise: NoiseArg,
    #[arg(long)]
    pub rate: f64,
    /// Headerless `C × C` row-stochastic CSV; required for asym.
    #[arg(long)]
    pub transition: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Class count; inferred from the transition matrix or the labels.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, value_enum, default_value = "laplace")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Classifier probabilities as an `N × C` `.lcf` matrix (gmm only).
    #[arg(long)]
    pub probs: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Statistics JSON; defaults to `<out stem>.stats.json`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Reduced dimension; defaults to min(d, 64).
    #[arg(long)]
    pub pca_dim: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Ground truth for the F1 column.
    #[arg(long)]
    pub truth_labels: Option<PathBuf>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub confidence: PathBuf,
    #[arg(long)]
    pub truth_labels: PathBuf,
    #[arg(long)]
    pub noisy_labels: PathBuf,
    #[arg(long, default_value_t = lconf_core::metrics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lconf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Corrupt(a) => commands::corrupt(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}

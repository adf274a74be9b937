use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "tpad", version, about = "Two-phase anomaly detection with PCA and autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Fit a normalizer and a PCA or autoencoder model on training data.
    Fit(FitArgs),
    /// Cross-validated reconstruction error over a range of latent sizes.
    Sweep(SweepArgs),
    /// Calibrate thresholds on training data and flag test rows.
    Detect(DetectArgs),
    /// Score detection results against labels.
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Water tank with outflow q_o = a·sqrt(H).
    Watertank(WatertankArgs),
    /// Observations built from a low-dimensional latent through a pool of nonlinearities.
    Nonlin(NonlinArgs),
}

#[derive(Args)]
struct WatertankArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    h_min: f64,
    #[arg(long, default_value_t = 10.0)]
    h_max: f64,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Number of anomalous rows to generate in addition.
    #[arg(long)]
    anomalies: Option<usize>,
    /// Comma-separated anomaly kinds: off_manifold, out_of_range.
    #[arg(long, default_value = "off_manifold,out_of_range", value_delimiter = ',')]
    anomaly_kinds: Vec<String>,
    /// Where to write the anomalies (default: <out stem>_anomalies.csv).
    #[arg(long)]
    anomaly_out: Option<PathBuf>,
    /// Also write normal rows followed by the anomalies to this file.
    #[arg(long, requires = "anomalies")]
    mixed_out: Option<PathBuf>,
}

#[derive(Args)]
struct NonlinArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    latent_dim: usize,
    #[arg(long)]
    obs_dim: usize,
    /// Comma-separated ops: product, cube, time_pair, linear_mix.
    #[arg(long, value_delimiter = ',', required = true)]
    ops: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Where to write the column manifest (default: <out stem>_manifest.json).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pca,
    Ae,
}

#[derive(Args)]
struct FitArgs {
    method: MethodArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    p: usize,
    /// Autoencoder settings as JSON (hidden widths and training options).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: MethodArg,
    #[arg(long, default_value_t = 1)]
    pmin: usize,
    #[arg(long)]
    pmax: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of the baseline error that counts as reconstructed.
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON result; a CSV curve is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 0.999)]
    quantile: f64,
    /// Latent-space detector: knn[:k=N], kmeans[:k=N,seed=S] or hypercube.
    #[arg(long)]
    second_phase: Option<String>,
    /// JSON lines, one result per test row.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Recon,
    Second,
    Combined,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    /// CSV whose `label` column holds the ground truth.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = ScoreArg::Combined)]
    score: ScoreArg,
    #[arg(long)]
    out: PathBuf,
    /// Optional ROC curve dump (fpr,tpr).
    #[arg(long)]
    roc: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(SynthCommand::Watertank(a)) => commands::synth_watertank(a),
        Command::Synth(SynthCommand::Nonlin(a)) => commands::synth_nonlin(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Detect(a) => commands::detect(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `histcal`: evaluate and calibrate classifiers against label histograms.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "histcal", version, about = "Evaluate and calibrate classifiers against label histograms")]
struct Cli {
    /// Worker threads for parallel evaluation (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its ground truth
    Simulate(SimulateArgs),
    /// Compute every metric for a dataset
    Evaluate(EvaluateArgs),
    /// Fit an alpha-calibration model
    AlphaFit(AlphaFitArgs),
    /// Attach alpha0, disagreement estimates and posteriors to a dataset
    AlphaApply(AlphaApplyArgs),
    /// Fit a temperature to the logits
    TsFit(TsFitArgs),
    /// Rewrite probabilities with tempered logits
    TsApply(TsApplyArgs),
    /// Write reliability-diagram data as CSV
    Reliability(ReliabilityArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    UniformBinary,
    Dirichlet,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n_instances: usize,
    /// Labels per instance
    #[arg(long)]
    n_labels: u32,
    /// Number of classes (dirichlet only)
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Symmetric Dirichlet concentration (dirichlet only)
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    /// Replace the perfect predictor by softmax(log Q + N(0, sd^2)) per class
    #[arg(long)]
    logit_noise: Option<f64>,
    /// Replace the predictor by softmax(T log z); T > 1 is overconfident.
    /// Applied after --logit-noise
    #[arg(long)]
    distort_temperature: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Weights {
    Uniform,
    Labels,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Predictions {
    /// The `probs` field (and `dpe`/`alpha0` when present)
    Probs,
    /// The `posterior` field written by `alpha-apply --posterior-label`
    Posterior,
    /// Mean of the `ensemble` members
    Ensemble,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 15)]
    bins: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    weight_policy: Weights,
    #[arg(long, value_enum, default_value = "probs")]
    predictions: Predictions,
    /// Ground-truth JSONL; adds oracle values and estimate-minus-oracle deltas
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Monte Carlo label draws for the oracle
    #[arg(long, default_value_t = 0)]
    mc_labels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum AlphaModeArg {
    Pointwise,
    Featurized,
}

#[derive(Args, Debug, Serialize)]
struct AlphaFitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "featurized")]
    mode: AlphaModeArg,
    /// Regularization on (log alpha0)^2
    #[arg(long, default_value_t = histcal::alpha::DEFAULT_LAMBDA_ALPHA)]
    lambda: f64,
    /// Share of records used for fitting; the rest drive early stopping
    #[arg(long, default_value_t = histcal::split::DEFAULT_SPLIT_FRACTION)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct AlphaApplyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Consume one annotation per record as the expert label and write the
    /// posterior; the label is removed from the written histogram
    #[arg(long)]
    posterior_label: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_data: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TsFitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = histcal::split::DEFAULT_SPLIT_FRACTION)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TsApplyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_data: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Target {
    Cpe,
    Disagreement,
}

#[derive(Args, Debug, Serialize)]
struct ReliabilityArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "cpe")]
    target: Target,
    /// Class for the cpe target; all classes are pooled when omitted
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, default_value_t = 15)]
    bins: usize,
    #[arg(long, value_enum, default_value = "probs")]
    predictions: Predictions,
    #[arg(long)]
    out_csv: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::AlphaFit(a) => commands::alpha_fit(a),
        Command::AlphaApply(a) => commands::alpha_apply(a),
        Command::TsFit(a) => commands::ts_fit(a),
        Command::TsApply(a) => commands::ts_apply(a),
        Command::Reliability(a) => commands::reliability(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

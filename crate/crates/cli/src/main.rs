//! `sedkit`: command-line front end for the sound event detection toolkit.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sedkit_core::{Error, ErrorCategory, PipelineConfig};

/// Sound event detection pipeline stages and loss experiments.
///
/// Exit codes: 0 success, 1 I/O or parse error, 2 validation error,
/// 3 internal error. `SEDKIT_THREADS` caps worker threads (0 = all cores).
#[derive(Debug, Parser)]
#[command(name = "sedkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
struct Common {
    /// Pipeline configuration file (`key = value` lines, `#` comments).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build boundary weight masks from labels (and optionally class weights).
    Weights(WeightsArgs),
    /// Threshold and median filter a score file into binary frame decisions.
    Medfilt(MedfiltArgs),
    /// Decode score files into an event list.
    Decode(DecodeArgs),
    /// Score detections against references: event-F1, PSDS1 and PSDS2.
    Eval(EvalArgs),
    /// Train and evaluate over a grid or two-step schedule of window parameters.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus (events, frame labels and features).
    Synth(SynthArgs),
    /// Perturb event boundaries with truncated Gaussian noise.
    Jitter(JitterArgs),
    /// Train the linear toy model on a synthetic corpus.
    TrainToy(TrainToyArgs),
    /// Compare plain BCE and the weighted loss over paired seeds.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassWeightScheme {
    /// Softmax of inverse event counts (sums to 1).
    Count,
    /// Effective-number weights (sum to the class count).
    Effective,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    #[command(flatten)]
    common: Common,

    /// Event table (`.tsv`) or frame label matrix (`.csv`).
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,

    /// Mask file for a `.csv` input; directory of `<clip>.csv` masks for `.tsv`.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Frames per clip when rasterizing a `.tsv` (default: cover the last offset).
    #[arg(long, value_name = "N")]
    num_frames: Option<usize>,

    /// Window height; overrides `alpha`.
    #[arg(long)]
    alpha: Option<f64>,

    /// Window width in frames (odd, or 0); overrides `sigma`.
    #[arg(long)]
    sigma: Option<usize>,

    /// Also write per-class weights to this CSV.
    #[arg(long, value_name = "FILE")]
    class_weights: Option<PathBuf>,

    /// Class weighting scheme for `--class-weights`.
    #[arg(long, value_enum, default_value = "count")]
    scheme: ClassWeightScheme,

    /// Effective-number scale for `--scheme effective`.
    #[arg(long, default_value_t = 8.0)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct MedfiltArgs {
    #[command(flatten)]
    common: Common,

    /// Score matrix CSV.
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,

    /// Output CSV of 0/1 decisions (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Decision threshold for every class; overrides `threshold`.
    #[arg(long)]
    threshold: Option<f64>,

    /// Median filter length in frames (odd); overrides `medfilt_frames`.
    #[arg(long, value_name = "N")]
    medfilt_frames: Option<usize>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[command(flatten)]
    common: Common,

    /// Score CSV file, or a directory of `<clip>.csv` score files.
    #[arg(long, value_name = "PATH")]
    scores: PathBuf,

    /// Output event table (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Decision threshold for every class; overrides `threshold`.
    #[arg(long)]
    threshold: Option<f64>,

    /// Median filter length in frames (odd); overrides `medfilt_frames`.
    #[arg(long, value_name = "N")]
    medfilt_frames: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,

    /// Reference event table.
    #[arg(long, value_name = "FILE")]
    refs: PathBuf,

    /// Directory of `<clip>.csv` score files.
    #[arg(long, value_name = "DIR")]
    scores: PathBuf,

    /// Metrics CSV (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Per-class counts and scores at the configured operating point.
    #[arg(long, value_name = "FILE")]
    per_class: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Protocol {
    /// Alpha list at a fixed sigma, then sigma list at the best alpha.
    TwoStep,
    /// Every (alpha, sigma) combination.
    Grid,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,

    /// Comma-separated window heights.
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,

    /// Comma-separated window widths (odd, or 0).
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<usize>,

    #[arg(long, value_enum, default_value = "two-step")]
    protocol: Protocol,

    /// Sigma used in the alpha step (default: config `sigma`).
    #[arg(long)]
    fixed_sigma: Option<usize>,

    /// Alpha used in the sigma step (default: best alpha by mean event-F1).
    #[arg(long)]
    fixed_alpha: Option<f64>,

    /// Sweep CSV (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,

    /// Output directory: `events.tsv`, `labels/`, `features/`.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Overrides `synth.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides `synth.num_clips`.
    #[arg(long)]
    num_clips: Option<usize>,
}

#[derive(Debug, Args)]
struct JitterArgs {
    #[command(flatten)]
    common: Common,

    /// Input event table.
    #[arg(long, value_name = "FILE")]
    events: PathBuf,

    /// Jitter standard deviation in seconds (default: `synth.annotation_jitter_std`).
    #[arg(long)]
    std: Option<f64>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Keep offsets within this clip length in seconds.
    #[arg(long, value_name = "SECONDS")]
    clip_duration: Option<f64>,

    /// Output event table (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainToyArgs {
    #[command(flatten)]
    common: Common,

    /// Corpus written by `sedkit synth` (generated from the config when omitted).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,

    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    model_out: PathBuf,

    /// Per-epoch loss CSV.
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,

    /// Directory for the trained model's score files on the training corpus.
    #[arg(long, value_name = "DIR")]
    scores_out: Option<PathBuf>,

    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,

    /// Window height; overrides `alpha`.
    #[arg(long)]
    alpha: Option<f64>,

    /// Window width in frames; overrides `sigma`.
    #[arg(long)]
    sigma: Option<usize>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,

    /// Comparison CSV (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Overrides `experiment.seeds`.
    #[arg(long)]
    seeds: Option<usize>,
}

/// Loads the config file, applies `--set` pairs, then subcommand flags.
fn load_config(common: &Common, flags: &[(&str, Option<String>)]) -> Result<PipelineConfig, Error> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::read(path)?,
        None => PipelineConfig::default(),
    };
    for pair in &common.overrides {
        config.set_pair(pair)?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    Ok(config)
}

fn configure_threads() -> Result<(), Error> {
    let threads = match std::env::var("SEDKIT_THREADS") {
        Ok(raw) if !raw.trim().is_empty() => raw.trim().parse::<usize>().map_err(|e| {
            Error::validation("SEDKIT_THREADS", format!("expected a thread count, got `{raw}`: {e}"))
        })?,
        _ => 0,
    };
    // a pool may already exist when embedded; the first configuration wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    let s = |v: Option<f64>| v.map(|x| x.to_string());
    let u = |v: Option<usize>| v.map(|x| x.to_string());
    match cli.command {
        Command::Weights(a) => {
            let config = load_config(&a.common, &[("alpha", s(a.alpha)), ("sigma", u(a.sigma))])?;
            commands::weights(&config, &a)
        }
        Command::Medfilt(a) => {
            let config = load_config(
                &a.common,
                &[("threshold", s(a.threshold)), ("medfilt_frames", u(a.medfilt_frames))],
            )?;
            commands::medfilt(&config, &a)
        }
        Command::Decode(a) => {
            let config = load_config(
                &a.common,
                &[("threshold", s(a.threshold)), ("medfilt_frames", u(a.medfilt_frames))],
            )?;
            commands::decode(&config, &a)
        }
        Command::Eval(a) => commands::eval(&load_config(&a.common, &[])?, &a),
        Command::Sweep(a) => commands::sweep(&load_config(&a.common, &[])?, &a),
        Command::Synth(a) => {
            let config = load_config(
                &a.common,
                &[
                    ("synth.rng_seed", a.seed.map(|x| x.to_string())),
                    ("synth.num_clips", u(a.num_clips)),
                ],
            )?;
            commands::synth(&config, &a)
        }
        Command::Jitter(a) => {
            let config = load_config(&a.common, &[("synth.annotation_jitter_std", s(a.std))])?;
            commands::jitter(&config, &a)
        }
        Command::TrainToy(a) => {
            let config = load_config(
                &a.common,
                &[
                    ("train.epochs", u(a.epochs)),
                    ("alpha", s(a.alpha)),
                    ("sigma", u(a.sigma)),
                ],
            )?;
            commands::train_toy(&config, &a)
        }
        Command::Experiment(a) => {
            let config = load_config(&a.common, &[("experiment.seeds", u(a.seeds))])?;
            commands::experiment(&config, &a)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err.category() {
                ErrorCategory::Parse => 1,
                ErrorCategory::Validation => 2,
                ErrorCategory::Internal => 3,
            })
        }
    }
}

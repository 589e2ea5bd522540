//! `dstft`: gradient checks, loss sweeps, tracking and joint-training runs
//! for the differentiable-window STFT.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Exit status for a finished run that did not succeed.
pub const EXIT_FAILURE: u8 = 1;
/// Exit status for bad flags or configuration.
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "dstft", version, about = "Differentiable-window STFT experiments")]
struct Cli {
    /// File of `key value` lines using the long flag names; flags on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Finite-difference check of every analytic theta-gradient.
    #[command(args_override_self = true)]
    Gradcheck(GradcheckArgs),
    /// Tracking loss over a grid of window lengths.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Gradient descent on the window length for frequency tracking.
    #[command(args_override_self = true)]
    Track(TrackArgs),
    /// Joint training of the window length and a softmax classifier.
    #[command(args_override_self = true)]
    Joint(JointArgs),
    /// Print the header summary of a 16-bit PCM mono WAV file.
    #[command(args_override_self = true)]
    WavInfo(WavInfoArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    FixedSize,
    FixedOverlap,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Fm,
    Constant,
    Chirp,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TransformArgs {
    /// Frame length N (power of two).
    #[arg(long, default_value_t = 128)]
    pub support_n: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::FixedSize)]
    pub variant: VariantArg,
    /// Hop in samples for the fixed-size variant.
    #[arg(long, default_value_t = 32)]
    pub hop: usize,
    /// Overlap ratio for the fixed-overlap variant.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DatasetArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Fm)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 16)]
    pub signals: usize,
    #[arg(long, default_value_t = 4096)]
    pub samples: usize,
    #[arg(long, default_value_t = 8000.0)]
    pub sample_rate: f64,
    /// Signal-to-noise ratio in dB; `inf` for noiseless signals.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    /// Carrier (fm), tone (constant) or center (chirp) frequency in Hz.
    #[arg(long, default_value_t = 1500.0)]
    pub carrier: f64,
    #[arg(long, default_value_t = 200.0)]
    pub carrier_jitter: f64,
    /// FM depth, or chirp half-span, in Hz.
    #[arg(long, default_value_t = 800.0)]
    pub depth: f64,
    #[arg(long, default_value_t = 30.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 5.0)]
    pub rate_jitter: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutArgs {
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Scale every analytic gradient by 1.1 to confirm the harness fails.
    #[arg(long)]
    pub corrupt: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub theta_min: f64,
    /// Defaults to the frame length.
    #[arg(long)]
    pub theta_max: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrackArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4.0)]
    pub theta0: f64,
    #[arg(long, default_value_t = 3.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 2.0)]
    pub theta_min: f64,
    /// Defaults to the frame length.
    #[arg(long)]
    pub theta_max: Option<f64>,
    /// Grid size of the companion sweep.
    #[arg(long, default_value_t = 64)]
    pub sweep_steps: usize,
    /// Debug: report a NaN loss at this iteration.
    #[arg(long, hide = true)]
    pub nan_at: Option<usize>,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct JointArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8.0)]
    pub theta0: f64,
    /// Learning rate for the classifier weights and bias.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub lr_theta: f64,
    #[arg(long, visible_alias = "iters", default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub check_every: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub check_epsilon: f64,
    #[arg(long, default_value_t = 2.0)]
    pub theta_min: f64,
    /// Defaults to the frame length.
    #[arg(long)]
    pub theta_max: Option<f64>,
    /// One carrier per class, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1500,1530")]
    pub carriers: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub depth: f64,
    #[arg(long, default_value_t = 2.0)]
    pub rate_lo: f64,
    #[arg(long, default_value_t = 8.0)]
    pub rate_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 32)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    #[arg(long, default_value_t = 8000.0)]
    pub sample_rate: f64,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct WavInfoArgs {
    pub path: PathBuf,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = Cli::parse_from(args);
    let code = match cli.command {
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Track(a) => commands::track(&a),
        Command::Joint(a) => commands::joint(&a),
        Command::WavInfo(a) => commands::wav_info(&a),
    };
    ExitCode::from(code)
}

//! `halluscope` command-line front end.
//!
//! Exit codes: 0 success, 2 validation or I/O error, 3 infeasible grid or empty bank,
//! 4 internal invariant violation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use halluscope::perturb::CorruptionKind;
use halluscope::scorer::{Fusion, VariantKind};

#[derive(Parser, Debug)]
#[command(name = "halluscope", version, about = "Feature-space hallucination monitors for image-to-image models")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "HALLUSCOPE_THREADS")]
    pub threads: Option<usize>,

    /// Log level for stderr diagnostics.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Self-tune a monitor on a calibration dataset.
    Calibrate(CalibrateArgs),
    /// Score a dataset with a fitted monitor.
    Score(ScoreArgs),
    /// Evaluate confidence scores against a quality table.
    Eval(EvalArgs),
    /// Re-tune on downsampled calibration sets and evaluate on a test set.
    Sensitivity(SensitivityArgs),
    /// Kendall tau and top-k overlap between metric columns.
    Correlate(CorrelateArgs),
    /// Apply an image corruption to an FTB image batch.
    Corrupt(CorruptArgs),
    /// Generate the planted synthetic fixture.
    Synth(SynthArgs),
    /// Compute PSNR and MS-SSIM between image batches.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug, Clone)]
pub struct TuneArgs {
    /// Validation fraction of the tuning split.
    #[arg(long, default_value_t = 0.25)]
    pub val_frac: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Grid override JSON; missing fields take the defaults.
    #[arg(long)]
    pub grid: Option<PathBuf>,

    /// Variant measure (overrides the grid file).
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<VariantKind>,

    /// Fusion mode (overrides the grid file).
    #[arg(long, value_parser = parse_fusion)]
    pub fusion: Option<Fusion>,

    /// Comma-separated metrics to tune on (overrides the grid file).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,

    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for monitor.json, its bank, tune.json and trace.csv.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub tune: TuneArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub monitor: PathBuf,

    #[arg(long)]
    pub manifest: PathBuf,

    /// Output CSV `sample_id,confidence`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Score CSV `sample_id,<score>`.
    #[arg(long)]
    pub scores: PathBuf,

    /// Quality CSV.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub quality: Option<PathBuf>,

    /// Dataset manifest whose quality table is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Comma-separated metrics (default: every column).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,

    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,

    /// Directory for per-metric rejection curves `curve_<metric>.csv`.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub calib: PathBuf,

    #[arg(long)]
    pub test: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    /// Comma-separated downsampling factors.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    pub factors: Vec<usize>,

    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    #[command(flatten)]
    pub tune: TuneArgs,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// Quality CSV: correlate metrics over samples.
    #[arg(long, conflicts_with = "reports", required_unless_present = "reports")]
    pub quality: Option<PathBuf>,

    /// HRP report JSONs: correlate metrics over monitors.
    #[arg(long, num_args = 1..)]
    pub reports: Vec<PathBuf>,

    /// Size of the top sets compared by the overlap ratio.
    #[arg(long, default_value_t = 5)]
    pub top: usize,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    /// Input FTB image batch `N x C x H x W` (f32).
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_parser = parse_corruption)]
    pub kind: CorruptionKind,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Dynamic range of the images.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f32,

    /// Noise or blur sigma.
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Contrast factor lower bound.
    #[arg(long)]
    pub low: Option<f64>,

    /// Contrast factor upper bound.
    #[arg(long)]
    pub high: Option<f64>,

    /// Pixel dropout rate.
    #[arg(long)]
    pub rate: Option<f64>,

    /// Number of saturation boxes.
    #[arg(long)]
    pub count: Option<usize>,

    /// Saturation box side in pixels.
    #[arg(long)]
    pub size: Option<usize>,

    /// Channel misregistration offset in pixels.
    #[arg(long)]
    pub offset: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 2000)]
    pub n_calib: usize,

    #[arg(long, default_value_t = 500)]
    pub n_test: usize,

    #[arg(long, default_value_t = 64)]
    pub channels: usize,

    #[arg(long, default_value_t = 8)]
    pub centers: usize,

    /// Metric-specific noise scale.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    #[arg(long, default_value_t = 2.0)]
    pub steepness: f64,

    #[arg(long, default_value_t = 0.5)]
    pub spread: f64,

    /// Let the feature norm carry an extra degradation factor.
    #[arg(long)]
    pub fn_signal: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Model outputs, FTB `N x C x H x W` (f32).
    #[arg(long)]
    pub output: PathBuf,

    /// Reference targets, same shape.
    #[arg(long)]
    pub target: PathBuf,

    /// Manifest supplying sample ids (default: `s00000`, `s00001`, ...).
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    #[arg(long, default_value_t = 1.0)]
    pub peak: f32,

    /// Output quality CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> Result<VariantKind, String> {
    s.parse().map_err(|e: halluscope::Error| e.to_string())
}

fn parse_fusion(s: &str) -> Result<Fusion, String> {
    s.parse().map_err(|e: halluscope::Error| e.to_string())
}

fn parse_corruption(s: &str) -> Result<CorruptionKind, String> {
    s.parse().map_err(|e: halluscope::Error| e.to_string())
}

fn exit_code(err: &halluscope::Error) -> u8 {
    if err.is_invariant() {
        4
    } else if err.is_infeasible() || matches!(err.root(), halluscope::Error::EmptyBank { .. }) {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

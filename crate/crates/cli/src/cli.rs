use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use velosurf::selection::FoldStrategy;

pub const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (model format velosurf-model v1, dataset format velosurf-dataset v1)"
);

/// Velocity-surface reconstruction over (time × thickness) with ε-SVR.
///
/// Options may also come from `--config FILE` holding `key=value` lines, one
/// per flag (long name without dashes, e.g. `gamma=0.1`, `loo=true`).
/// Command-line flags win over the file, which wins over built-in defaults.
#[derive(Debug, Parser)]
#[command(name = "velosurf", version, long_version = LONG_VERSION)]
pub struct Cli {
    /// key=value defaults for any flag of the chosen subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for grid search and surface evaluation.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Treat solver non-convergence as a failure (exit code 3).
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check experiment files and write an issue report.
    Validate(ValidateArgs),
    /// Smooth, align and scale experiments into a training set.
    Preprocess(PreprocessArgs),
    /// Fit an ε-SVR model to a preprocessed training set.
    Train(TrainArgs),
    /// Cross-validated search over (γ, C, ε).
    Gridsearch(GridsearchArgs),
    /// Evaluate a model at given (time, thickness) points.
    Predict(PredictArgs),
    /// Evaluate a model on a regular (time × thickness) lattice.
    Surface(SurfaceArgs),
    /// Score experiments against a model and flag outliers.
    Outliers(OutliersArgs),
    /// Write a synthetic experiment set.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Experiment CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Series shorter than this are reported.
    #[arg(long, default_value_t = 100)]
    pub min_length: usize,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Half-width of the triangular smoothing window, in samples.
    #[arg(long, default_value_t = 5)]
    pub smoothing: usize,
    /// Skip smoothing.
    #[arg(long, conflicts_with = "smoothing")]
    pub no_smoothing: bool,
    /// Onset is the first sample reaching this fraction of the peak.
    #[arg(long, default_value_t = 0.05)]
    pub onset_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Rbf,
    Arbf,
    Poly,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Stop once the maximal KKT violation drops to this.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_iterations: usize,
    /// Kernel row cache, MiB.
    #[arg(long, default_value_t = 256)]
    pub cache_mb: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub dataset: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    pub kernel: KernelKind,
    /// RBF width.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Per-axis widths for `arbf`, time first.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub gammas: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    /// Box bound on the dual coefficients (inverse regularization weight).
    #[arg(long = "c", short = 'C', default_value_t = 1.0)]
    pub c: f64,
    /// Tube half-width, scaled velocity units.
    #[arg(long, default_value_t = 0.001)]
    pub epsilon: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct GridsearchArgs {
    #[arg(short, long)]
    pub dataset: PathBuf,
    /// Error table CSV.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Best cell as key=value lines, usable as `--config` for `train`.
    #[arg(long)]
    pub best: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.05,0.1,0.2,0.3,0.5")]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.25,0.5,0.75,1,2")]
    pub cs: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.001,0.005,0.01,0.05")]
    pub epsilons: Vec<f64>,
    /// Number of folds.
    #[arg(short, long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = FoldStrategy::ByExperiment)]
    pub strategy: FoldStrategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add wall-clock seconds per cell (makes the table non-reproducible).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    #[arg(long, requires = "thickness_in", conflicts_with = "query_csv")]
    pub time_ns: Option<f64>,
    #[arg(long, requires = "time_ns")]
    pub thickness_in: Option<f64>,
    /// CSV with `time_ns,thickness_in` rows (header optional).
    #[arg(long, required_unless_present = "time_ns")]
    pub query_csv: Option<PathBuf>,
    /// Write `time_ns,thickness_in,velocity_mps` here instead of printing.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SurfaceFormat {
    Matrix,
    Xyz,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// `start:stop:step` in ns; defaults to the training span at its sample step.
    #[arg(long)]
    pub time: Option<String>,
    /// `start:stop:step` in inches.
    #[arg(long)]
    pub thickness: String,
    #[arg(long, value_enum, default_value_t = SurfaceFormat::Matrix)]
    pub format: SurfaceFormat,
    #[arg(long, default_value_t = velosurf::surface::DEFAULT_CELL_BUDGET)]
    pub cell_budget: usize,
}

#[derive(Debug, Args)]
pub struct OutliersArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = velosurf::surface::DEFAULT_OUTLIER_THRESHOLD)]
    pub threshold: f64,
    /// Score each experiment against models retrained without it.
    #[arg(long)]
    pub loo: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.25,0.3125,0.375,0.4375,0.5")]
    pub thicknesses: Vec<f64>,
    #[arg(long, default_value_t = 1656)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 2.0)]
    pub dt_ns: f64,
    /// Multiplicative noise level (standard deviation relative to the signal).
    #[arg(long, default_value_t = 0.04)]
    pub noise_rel: f64,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Also write the noiseless ground truth as `<id>_truth.csv`.
    #[arg(long)]
    pub truth: bool,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use diffpca::dimred::Mode;

#[derive(Debug, Parser)]
#[command(name = "diffpca", version, about = "Differential PCA, differential regression and LSM experiments")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "DIFFPCA_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// Simulate a dataset of states, payoffs and pathwise differentials.
    Generate(GenerateArgs),
    /// Nested Monte-Carlo prices and risk reports.
    Risk(RiskArgs),
    /// Fit a classic, risk or differential PCA encoder.
    Pca(PcaArgs),
    /// Fit a value-only or differential regression on a dataset.
    Regress(RegressArgs),
    /// Fit an exercise policy for a Bermudan and price it.
    Lsm(LsmArgs),
    /// Compare continuation-value regressions at one call date.
    Study(StudyArgs),
    /// Time the covariance and eigen-decomposition kernels.
    Bench(BenchArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Classic,
    Risk,
    Differential,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Classic => Mode::Classic,
            ModeArg::Risk => Mode::Risk,
            ModeArg::Differential => Mode::Differential,
        }
    }
}

/// Model and instrument sources. Paths are resolved into the manifest.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigArgs {
    /// JSON document with a `model` entry.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON document with an `instrument` entry (defaults to the model file).
    #[arg(long)]
    pub instrument: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Exposure date in years.
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    #[arg(long, default_value_t = 1024)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    /// Number of outer states.
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    /// Inner paths per outer state.
    #[arg(long, default_value_t = 1024)]
    pub inner: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationArgs {
    /// Truncation tolerance as a fraction of the total eigenvalue mass.
    #[arg(long, conflicts_with = "dim")]
    pub tol: Option<f64>,
    /// Number of kept axes.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Subtract the mean before forming the covariance.
    #[arg(long)]
    pub central: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaArgs {
    /// Dataset CSV from `generate` (classic and differential modes). When
    /// absent, data is simulated from `--model` and `--instrument`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Differential)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Unit-variance features (classic mode).
    #[arg(long)]
    pub normalize: bool,
    /// Standardize state coordinates before fitting.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f64,
    #[arg(long, default_value_t = 8192)]
    pub m: usize,
    /// Inner paths per state for risk mode.
    #[arg(long, default_value_t = 1024)]
    pub inner: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressArgs {
    /// Dataset CSV from `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    /// Use derivative labels.
    #[arg(long)]
    pub differential: bool,
    /// Tikhonov weight for value-only regression.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Comma-separated derivative weights (default: E[Y^2]/E[Z_i^2]).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Rescale inputs onto [-1, 1] before expanding the basis.
    #[arg(long)]
    pub rescale: bool,
    /// Regress on differential-PCA features instead of the raw state.
    #[arg(long)]
    pub encode: bool,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Fraction of rows held out for an out-of-sample error.
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsmArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Training paths per call date.
    #[arg(long, default_value_t = 8192)]
    pub m: usize,
    /// Pricing paths.
    #[arg(long, default_value_t = 65536)]
    pub m_price: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Use derivative labels in the regressions.
    #[arg(long)]
    pub differential: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also price on a binomial tree with this many steps (one-asset
    /// lognormal Bermudan put only).
    #[arg(long)]
    pub lattice_steps: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Call date at which to study the continuation value.
    #[arg(long)]
    pub date: f64,
    #[arg(long, default_value_t = 8192)]
    pub m: usize,
    #[arg(long, default_value_t = 128)]
    pub m_test: usize,
    #[arg(long, default_value_t = 4096)]
    pub inner: usize,
    /// Basis degree on differential-PCA features.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Basis degree on the raw state.
    #[arg(long, default_value_t = 2)]
    pub degree_raw: usize,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Rows of the covariance benchmark.
    #[arg(long, default_value_t = 32768)]
    pub cov_rows: usize,
    /// Dimension of the covariance benchmark.
    #[arg(long, default_value_t = 1024)]
    pub dim: usize,
    /// Dimension of the eigen benchmark (default: `--dim`).
    #[arg(long)]
    pub eigen_dim: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Manifest written by a previous run.
    pub manifest: PathBuf,
    /// Output directory (default: the one recorded in the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "infogeo", version, about = "Derive and verify the geometry induced by a contrast function")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Metric, connections, skewness and kernel at each point.
    Analyze(AnalyzeArgs),
    /// Run residual suites over random points; exit 1 if any fails.
    Verify(VerifyArgs),
    /// Reduce a singular structure to its quotient chart.
    Reduce(ReduceArgs),
    /// Natural-gradient descent towards a target.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Zoo model name.
    #[arg(long, required_unless_present = "model_file", conflicts_with = "model_file")]
    pub model: Option<String>,
    /// TOML model descriptor.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Model parameters as `key=value`, comma separated or repeated.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub params: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// JSON array of coordinate arrays, inline or as a file path.
    #[arg(long, conflicts_with = "random")]
    pub points: Option<String>,
    /// Number of random points.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub points: PointArgs,
    /// Relative eigenvalue threshold for the kernel.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// α values for the α-connections.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma list of suites, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub suite: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Points in quotient coordinates.
    #[command(flatten)]
    pub points: PointArgs,
    /// Quotient chart id; defaults to the model's primary chart.
    #[arg(long)]
    pub chart: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub fiber_checks: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub transport_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Target as `name=value` pairs or plain coordinates.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub target: Vec<String>,
    /// Starting point.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub theta0: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Number of runs; starts beyond `--theta0` are drawn at random.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Exit 5 unless every run converges.
    #[arg(long)]
    pub require_converged: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "cnlr", version, about = "Convex nonlinear least-squares regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a CSV dataset by gradient descent.
    Fit(FitArgs),
    /// Predict g(w·x) for every row of a CSV file.
    Predict(PredictArgs),
    /// Run the convexity checks for a transform.
    Verify(VerifyArgs),
    /// Compare restart dispersion of convex-sqrt and tanh fits on one dataset.
    Compare(CompareArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformName {
    ConvexSqrt,
    Affine,
    Tanh,
}

/// `auto` or an explicit positive bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YBound {
    Auto,
    Value(f64),
}

impl FromStr for YBound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(YBound::Auto);
        }
        positive(s).map(YBound::Value)
    }
}

pub fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be nonnegative and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct TransformArgs {
    #[arg(long, value_enum, default_value = "convex-sqrt")]
    pub transform: TransformName,
    /// Curvature rate of the convex-sqrt transform.
    #[arg(long, default_value = "1.0", value_parser = positive, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Target bound Y of the convex-sqrt transform: `auto` (max |y| of the data) or a number.
    #[arg(long, default_value = "auto", allow_negative_numbers = true)]
    pub y_bound: YBound,
    /// Output scale of the tanh transform.
    #[arg(long, default_value = "1.0", value_parser = positive, allow_negative_numbers = true)]
    pub scale: f64,
    /// Slope of the affine transform.
    #[arg(long, default_value = "1.0", value_parser = finite, allow_negative_numbers = true)]
    pub slope: f64,
    /// Intercept of the affine transform.
    #[arg(long, default_value = "0.0", value_parser = finite, allow_negative_numbers = true)]
    pub intercept: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target column name or zero-based index (default: last column).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Do not append a constant bias feature.
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    #[arg(long, default_value = "1e-8", value_parser = positive, allow_negative_numbers = true)]
    pub grad_tol: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    /// Where to write the fitted model as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Column to drop before predicting (name or zero-based index).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub transform: TransformArgs,
    /// Samples per midpoint check.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub restarts: u64,
    /// Curvature rate of the convex-sqrt transform.
    #[arg(long, default_value = "1.0", value_parser = positive, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value = "auto", allow_negative_numbers = true)]
    pub y_bound: YBound,
    /// Output scale of the tanh transform.
    #[arg(long, default_value = "1.0", value_parser = positive, allow_negative_numbers = true)]
    pub scale: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    /// Standard deviation of noise added to w·x before the transform.
    #[arg(long, default_value = "0", value_parser = nonnegative, allow_negative_numbers = true)]
    pub noise: f64,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path; the CSV goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the true weights (default: next to --out as `<stem>.weights.json`).
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use negsamp::experiments::Covariate;
use negsamp::Scheme;

#[derive(Debug, Parser)]
#[command(name = "negsamp", version, about = "Nonuniform negative sampling for rare-events logistic regression")]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn", env = "NEGSAMP_LOG")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a design.
    Generate(GenerateArgs),
    /// Draw and fit a pilot sample and write the pilot bundle.
    Pilot(PilotArgs),
    /// Negative-sample a dataset.
    Sample(SampleArgs),
    /// Fit a logistic model to a dataset or subsample.
    Fit(FitArgs),
    /// Run a simulation study from a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovariateArg {
    Normal,
    Lognormal,
    T3,
    Exponential,
}

impl From<CovariateArg> for Covariate {
    fn from(c: CovariateArg) -> Self {
        match c {
            CovariateArg::Normal => Covariate::Normal,
            CovariateArg::Lognormal => Covariate::LogNormal,
            CovariateArg::T3 => Covariate::T3,
            CovariateArg::Exponential => Covariate::Exponential,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "normal")]
    pub covariate: CovariateArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 6)]
    pub d: usize,
    /// Fixed intercept; calibrated to --target-ratio when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Comma-separated slope vector; all ones by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0 / 400.0)]
    pub target_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Uniform,
    Lcc,
    OptA,
    OptL,
    OptP,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Uniform => Scheme::Uniform,
            SchemeArg::Lcc => Scheme::Lcc,
            SchemeArg::OptA => Scheme::OptA,
            SchemeArg::OptL => Scheme::OptL,
            SchemeArg::OptP => Scheme::OptP,
        }
    }
}

#[derive(Debug, Args)]
pub struct PilotArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Scheme whose normalizer is computed.
    #[arg(long, value_enum, default_value = "opt-a")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Add U(0, scale) noise to every pilot coordinate.
    #[arg(long)]
    pub perturb_uniform: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = negsamp::sampling::DEFAULT_FLOOR)]
    pub floor: f64,
    /// Pilot bundle JSON; required by every scheme except uniform.
    #[arg(long)]
    pub pilot: Option<PathBuf>,
    /// Solve for the truncation level instead of leaving scores untruncated.
    #[arg(long)]
    pub truncate: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subsample CSV; a JSON sidecar is written next to it.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Mle,
    Ipw,
    Lik,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "mle")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = negsamp::estimators::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = negsamp::estimators::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Exit 0 even when the solver did not converge.
    #[arg(long)]
    pub allow_nonconverged: bool,
    /// Output JSON; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the replication count from the config.
    #[arg(long)]
    pub replications: Option<usize>,
}

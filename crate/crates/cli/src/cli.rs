use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "arbase",
    version,
    about = "Bayesian autoregressive spectral estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series and write it with its generating parameters.
    Generate(GenerateArgs),
    /// Fit an AR spectral estimator to a series.
    Fit(FitArgs),
    /// Periodogram of a series.
    Periodogram(PeriodogramArgs),
    /// Peaks of a spectrum CSV.
    Peaks(PeaksArgs),
    /// Sample ACF and PACF of a series.
    Acf(AcfArgs),
    /// Run a complete experiment preset.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    Ar,
    Gp,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub kind: GenerateKind,
    /// AR coefficients a_1..a_p, comma separated [default: the ar4 preset].
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "order"
    )]
    pub coefficients: Option<Vec<f64>>,
    /// AR order; 0 gives white noise. Only 0 or 4 (the preset) are accepted without --coefficients.
    #[arg(short = 'p', long)]
    pub order: Option<usize>,
    /// AR noise variance.
    #[arg(long, default_value_t = 1.0)]
    pub noise_variance: f64,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// GP marginal variance.
    #[arg(long, default_value_t = 1.0)]
    pub marginal_variance: f64,
    /// GP lengthscale, in time units.
    #[arg(long, default_value_t = 20.0)]
    pub lengthscale: f64,
    /// GP observation noise variance.
    #[arg(long, default_value_t = 0.01)]
    pub obs_noise_variance: f64,
    /// Number of samples.
    #[arg(short = 'n', long, default_value_t = 1000)]
    pub len: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
    /// Also print the series CSV to stdout.
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// CSV file with one observation per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Column name or zero-based index [default: `value` if present, else the last column].
    #[arg(long)]
    pub column: Option<String>,
    /// Sampling interval in time units.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Ase,
    BaseMcmc,
    BaseCf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoisePriorArg {
    HalfNormal,
    Exponential,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(short = 'p', long)]
    pub order: usize,
    /// Draws per chain (Model II draws draws × chains exact samples).
    #[arg(long, default_value_t = arbase::mcmc::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = arbase::mcmc::DEFAULT_CHAINS)]
    pub chains: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Choose Model II hyperparameters by grid-search cross-validation.
    #[arg(long)]
    pub cv: bool,
    #[arg(long, default_value_t = arbase::conjugate::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = arbase::spectrum::DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    /// Credible level of the PSD band.
    #[arg(long, default_value_t = arbase::posterior_psd::DEFAULT_LEVEL)]
    pub level: f64,
    /// Fit to the standardized series and map results back to data units.
    #[arg(long)]
    pub standardize: bool,
    /// Model I prior variance of each coefficient.
    #[arg(long, default_value_t = 1.0)]
    pub coeff_variance: f64,
    /// Model I noise prior scale.
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long, value_enum, default_value_t = NoisePriorArg::HalfNormal)]
    pub noise_prior: NoisePriorArg,
    /// Model II prior mean (constant vector).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
    /// Exit with status 3 when sampler diagnostics raise warnings.
    #[arg(long)]
    pub strict: bool,
    /// Also print the spectrum CSV to stdout.
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct PeriodogramArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Keep the sample mean instead of removing it.
    #[arg(long)]
    pub no_demean: bool,
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CenterArg {
    Mean,
    Median,
}

#[derive(Debug, Args)]
pub struct PeaksArgs {
    /// Spectrum CSV written by this tool.
    #[arg(long)]
    pub input: PathBuf,
    /// Minimum peak height relative to the global maximum.
    #[arg(long, default_value_t = arbase::spectrum::DEFAULT_PEAK_RATIO)]
    pub threshold: f64,
    /// Curve of a posterior spectrum to search [default: median when present].
    #[arg(long, value_enum)]
    pub center: Option<CenterArg>,
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Args)]
pub struct AcfArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 40)]
    pub max_lag: usize,
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
    #[arg(long)]
    pub stdout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Ar4,
    GpLaplace,
    Sunspots,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub name: ExperimentName,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
    /// Sunspots CSV [default: $ARBASE_DATA_DIR/sunspots_yearly.csv].
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = arbase::mcmc::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = arbase::mcmc::DEFAULT_CHAINS)]
    pub chains: usize,
    #[arg(long, default_value_t = arbase::conjugate::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = arbase::spectrum::DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[arg(long, default_value_t = arbase::posterior_psd::DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long)]
    pub strict: bool,
    /// Also print summary.json to stdout.
    #[arg(long)]
    pub stdout: bool,
}

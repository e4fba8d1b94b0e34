//! Model I: Gaussian prior on the AR coefficients, half-Normal prior on the
//! noise variance, sampled with adaptive random-walk Metropolis in
//! `(a, log σ²)`.

pub mod diagnostics;
pub mod sampler;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::armodel::{design_rows, fit_ase, segment_log_likelihood, ARParams, Gram};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;
use crate::timeseries::TimeSeries;

pub use diagnostics::{ess, mcse_mean, split_rhat};
pub use sampler::{run_chain, run_chains, Chain, SamplerSettings};

pub const DEFAULT_DRAWS: usize = 2000;
pub const DEFAULT_CHAINS: usize = 4;
const ACCEPTANCE_BAND: (f64, f64) = (0.1, 0.6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOneHyper {
    /// Prior variance `σ_a²` of each coefficient.
    pub coeff_variance: f64,
    /// Scale `σ_ε²` of the noise prior.
    pub noise_prior_scale: f64,
}

impl Default for ModelOneHyper {
    fn default() -> Self {
        Self {
            coeff_variance: 1.0,
            noise_prior_scale: 1.0,
        }
    }
}

impl ModelOneHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.coeff_variance > 0.0 && self.noise_prior_scale > 0.0) {
            return Err(Error::invalid("Model I hyperparameters must be positive"));
        }
        Ok(())
    }
}

/// Log-density of the noise-variance prior, up to a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePrior {
    /// Half-Normal on σ²: `−(σ²)² / (2σ_ε²)`.
    #[default]
    HalfNormal,
    /// Exponential on σ² (the density a half-Normal on σ induces):
    /// `−σ² / (2σ_ε²)`.
    Exponential,
}

impl NoisePrior {
    fn log_density(self, noise_variance: f64, scale: f64) -> f64 {
        match self {
            NoisePrior::HalfNormal => -noise_variance * noise_variance / (2.0 * scale),
            NoisePrior::Exponential => -noise_variance / (2.0 * scale),
        }
    }
}

fn log_prior(theta: &ARParams, hyper: &ModelOneHyper, prior: NoisePrior) -> f64 {
    let ata: f64 = theta.coefficients.iter().map(|a| a * a).sum();
    -ata / (2.0 * hyper.coeff_variance)
        + prior.log_density(theta.noise_variance, hyper.noise_prior_scale)
}

/// Unnormalized Model I log-posterior:
/// conditional log-likelihood − aᵀa/(2σ_a²) − (σ²)²/(2σ_ε²).
///
/// Returns `−∞` outside the support (σ² ≤ 0).
pub fn log_posterior_model1(theta: &ARParams, ts: &TimeSeries, hyper: &ModelOneHyper) -> f64 {
    log_posterior_with_prior(theta, ts, hyper, NoisePrior::HalfNormal)
}

pub fn log_posterior_with_prior(
    theta: &ARParams,
    ts: &TimeSeries,
    hyper: &ModelOneHyper,
    prior: NoisePrior,
) -> f64 {
    if !(theta.noise_variance > 0.0) {
        return f64::NEG_INFINITY;
    }
    segment_log_likelihood(theta, ts.values()) + log_prior(theta, hyper, prior)
}

/// Posterior draws of `(a_1..a_p, σ²)`, stored chain after chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub order: usize,
    pub draws: Vec<ARParams>,
    pub n_chains: usize,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl PosteriorSamples {
    pub fn new(order: usize, draws: Vec<ARParams>, n_chains: usize, seed: u64) -> Result<Self> {
        if draws.is_empty() || n_chains == 0 || !draws.len().is_multiple_of(n_chains) {
            return Err(Error::invalid(
                "draws must split evenly into a positive number of chains",
            ));
        }
        for d in &draws {
            if d.order() != order {
                return Err(Error::invalid("draw order differs from sample order"));
            }
            d.validate()?;
        }
        Ok(Self {
            order,
            draws,
            n_chains,
            acceptance_rate: 1.0,
            seed,
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.draws.len() / self.n_chains
    }

    /// Column `j` of the draw matrix: `a_{j+1}` for `j < p`, σ² for `j = p`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws
            .iter()
            .map(|d| {
                if j < self.order {
                    d.coefficients[j]
                } else {
                    d.noise_variance
                }
            })
            .collect()
    }

    pub fn chains_for(&self, j: usize) -> Vec<Vec<f64>> {
        self.column(j)
            .chunks(self.draws_per_chain())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Equal-tailed interval of column `j`.
    pub fn credible_interval(&self, j: usize, level: f64) -> (f64, f64) {
        let mut col = self.column(j);
        col.sort_by(f64::total_cmp);
        (
            quantile_sorted(&col, (1.0 - level) / 2.0),
            quantile_sorted(&col, (1.0 + level) / 2.0),
        )
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..=self.order)
            .map(|j| crate::stats::mean(&self.column(j)))
            .collect()
    }

    /// One row per draw: `a_1,…,a_p,sigma2`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for k in 1..=self.order {
            let _ = write!(out, "a_{k},");
        }
        out.push_str("sigma2\n");
        for d in &self.draws {
            for a in &d.coefficients {
                let _ = write!(out, "{a},");
            }
            let _ = writeln!(out, "{}", d.noise_variance);
        }
        out
    }

    /// Rescales every noise variance (coefficients unchanged).
    pub fn scale_noise(&mut self, factor: f64) {
        for d in &mut self.draws {
            d.noise_variance *= factor;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcOptions {
    pub n_draws: usize,
    pub n_chains: usize,
    /// Defaults to `max(n_draws / 2, 1000)`.
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub noise_prior: NoisePrior,
}

impl McmcOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            n_draws: DEFAULT_DRAWS,
            n_chains: DEFAULT_CHAINS,
            burn_in: None,
            seed,
            noise_prior: NoisePrior::HalfNormal,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or((self.n_draws / 2).max(1000))
    }
}

/// Draws from the Model I posterior.
///
/// Chains start one posterior standard deviation or so around the
/// least-squares fit (or `a = 0`, σ² = sample variance when that fit fails)
/// and run on `(a, log σ²)` with the log-Jacobian `log σ²` added to the
/// target. Proposals are preconditioned by the least-squares covariance;
/// only their global scale is tuned during burn-in.
pub fn sample_posterior_mcmc(
    ts: &TimeSeries,
    p: usize,
    hyper: &ModelOneHyper,
    options: &McmcOptions,
) -> Result<PosteriorSamples> {
    hyper.validate()?;
    if ts.len() < 2 * p + 2 {
        return Err(Error::SeriesTooShort {
            len: ts.len(),
            needed: 2 * p + 2,
            context: format!("Model I posterior of order {p}"),
        });
    }
    if options.n_draws < 100 {
        return Err(Error::invalid("n_draws must be at least 100"));
    }
    if options.n_chains == 0 {
        return Err(Error::invalid("n_chains must be at least 1"));
    }

    let gram: Gram = design_rows(ts.values(), p).gram();
    let prior = options.noise_prior;
    let target = |x: &[f64]| -> f64 {
        let log_s2 = x[p];
        let s2 = log_s2.exp();
        if !(s2 > 0.0 && s2.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let a = DVector::from_column_slice(&x[..p]);
        let ata = a.dot(&a);
        gram.log_likelihood(&a, s2) - ata / (2.0 * hyper.coeff_variance)
            + prior.log_density(s2, hyper.noise_prior_scale)
            + log_s2
    };

    // The chains run in whitened coordinates x = start + L z, where L L^T
    // approximates the posterior covariance; the Jacobian is constant.
    let (start, shape) = initial_point(ts, p, &gram, &target)?;
    let d = p + 1;
    let to_x = |z: &[f64]| -> Vec<f64> {
        let x = &start + &shape * DVector::from_column_slice(z);
        x.iter().copied().collect()
    };
    let white = |z: &[f64]| target(&to_x(z));

    let mut jitter_rng = sampler::chain_rng(options.seed, usize::MAX - 1);
    let inits: Vec<Vec<f64>> = (0..options.n_chains)
        .map(|_| {
            (0..d)
                .map(|_| StandardNormal.sample(&mut jitter_rng))
                .collect()
        })
        .collect();
    // a jittered start can land off-support; fall back to the common start
    let inits: Vec<Vec<f64>> = inits
        .into_iter()
        .map(|z: Vec<f64>| {
            if white(&z).is_finite() {
                z
            } else {
                vec![0.0; d]
            }
        })
        .collect();

    // the whitening already supplies the shape; a burn-in covariance estimate
    // from a few hundred correlated states is noisier than the preconditioner
    let mut settings = SamplerSettings::new(options.n_draws, options.burn_in());
    settings.learn_covariance = false;
    let scales = vec![2.38 / (d as f64).sqrt(); d];
    let chains = run_chains(white, &inits, &scales, &settings, options.seed)?;

    let acceptance_rate =
        chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / chains.len() as f64;
    let mut warnings = Vec::new();
    for (i, c) in chains.iter().enumerate() {
        if c.acceptance_rate < ACCEPTANCE_BAND.0 || c.acceptance_rate > ACCEPTANCE_BAND.1 {
            warnings.push(format!(
                "chain {i}: acceptance rate {:.3} outside [{}, {}] after tuning",
                c.acceptance_rate, ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
            ));
        }
    }
    let draws = chains
        .iter()
        .flat_map(|c| c.draws.iter())
        .map(|z| {
            let x = to_x(z);
            ARParams {
                coefficients: x[..p].to_vec(),
                noise_variance: x[p].exp(),
            }
        })
        .collect();
    let mut samples = PosteriorSamples::new(p, draws, options.n_chains, options.seed)?;
    samples.acceptance_rate = acceptance_rate;
    samples.warnings = warnings;
    Ok(samples)
}

/// Starting point in `(a, log σ²)` and a lower-triangular proposal shape:
/// the Cholesky factor of the least-squares covariance `σ²(XᵀX)⁻¹` for the
/// coefficients, and `sqrt(2/(T−p))` for `log σ²`.
fn initial_point<F: Fn(&[f64]) -> f64>(
    ts: &TimeSeries,
    p: usize,
    gram: &Gram,
    target: &F,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let rows = gram.n_rows.max(1) as f64;
    let log_sd = (2.0 / rows).sqrt();
    let mut shape = DMatrix::zeros(p + 1, p + 1);
    shape[(p, p)] = log_sd;
    if let Ok(fit) = fit_ase(ts, p) {
        let mut x = fit.coefficients.clone();
        x.push(fit.noise_variance.ln());
        if target(&x).is_finite() {
            let factor = gram
                .xtx
                .clone()
                .cholesky()
                .map(|c| c.inverse() * fit.noise_variance)
                .and_then(|cov| cov.cholesky())
                .map(|c| c.unpack())
                .filter(|l| l.iter().all(|v| v.is_finite()));
            match factor {
                Some(l) => shape.view_mut((0, 0), (p, p)).copy_from(&l),
                None => shape.view_mut((0, 0), (p, p)).fill_diagonal(0.1),
            }
            return Ok((DVector::from_vec(x), shape));
        }
    }
    let mut x = vec![0.0; p];
    x.push(ts.variance().max(f64::MIN_POSITIVE).ln());
    if !target(&x).is_finite() {
        return Err(Error::Numerical(
            "Model I log-posterior is not finite at the initial point or its fallback".into(),
        ));
    }
    shape.view_mut((0, 0), (p, p)).fill_diagonal(0.1);
    Ok((DVector::from_vec(x), shape))
}

/// Per-coordinate split-R̂ and ESS (columns `a_1..a_p, σ²`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
}

impl Diagnostics {
    /// Largest finite R̂, or `NaN` when none is defined.
    pub fn max_rhat(&self) -> f64 {
        self.rhat
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::min)
    }
}

pub fn chain_diagnostics(samples: &PosteriorSamples) -> Result<Diagnostics> {
    if samples.n_chains < 2 {
        return Err(Error::invalid("R-hat needs at least two chains"));
    }
    if samples.draws_per_chain() < 100 {
        return Err(Error::invalid(
            "diagnostics need at least 100 draws per chain",
        ));
    }
    let (rhat, ess) = (0..=samples.order)
        .map(|j| {
            let chains = samples.chains_for(j);
            (split_rhat(&chains), diagnostics::ess(&chains))
        })
        .unzip();
    Ok(Diagnostics { rhat, ess })
}

//! Estimator runs shared by `fit` and the experiment presets.

use std::time::Instant;

use arbase::conjugate::{max_feasible_folds, DEFAULT_FOLDS};
use arbase::timeseries::Standardization;
use arbase::{
    ar_psd, chain_diagnostics, fit_ase, grid_search_cv, map_estimate, nig_posterior, psd_posterior,
    sample_nig, sample_posterior_mcmc, ARParams, CvResult, Diagnostics, FrequencyGrid, HyperGrid,
    McmcOptions, ModelOneHyper, ModelTwoHyper, NoisePrior, PosteriorSamples, PosteriorSpectrum,
    SpectrumEstimate, TimeSeries,
};
use serde::Serialize;

use crate::error::CliResult;

pub const RHAT_WARN: f64 = 1.05;
pub const ESS_WARN: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub order: usize,
    pub grid: FrequencyGrid,
    pub level: f64,
    pub seed: u64,
    /// Draws per chain for Model I; Model II draws `n_draws · n_chains` exact samples.
    pub n_draws: usize,
    pub n_chains: usize,
    pub standardize: bool,
    pub model_one: ModelOneHyper,
    pub noise_prior: NoisePrior,
    pub model_two: Option<ModelTwoHyper>,
    /// Run grid-search CV for Model II with this many folds.
    pub cv_folds: Option<usize>,
}

impl FitConfig {
    pub fn new(order: usize, grid: FrequencyGrid, seed: u64) -> Self {
        Self {
            order,
            grid,
            level: arbase::posterior_psd::DEFAULT_LEVEL,
            seed,
            n_draws: arbase::mcmc::DEFAULT_DRAWS,
            n_chains: arbase::mcmc::DEFAULT_CHAINS,
            standardize: false,
            model_one: ModelOneHyper::default(),
            noise_prior: NoisePrior::HalfNormal,
            model_two: None,
            cv_folds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BayesFit {
    pub spectrum: PosteriorSpectrum,
    pub samples: PosteriorSamples,
    pub diagnostics: Option<Diagnostics>,
    pub hyper: Option<ModelTwoHyper>,
    pub cv: Option<CvResult>,
    pub map: Option<ARParams>,
    pub runtime_seconds: f64,
    pub warnings: Vec<String>,
}

/// Sidecar written next to posterior samples.
#[derive(Debug, Clone, Serialize)]
pub struct SamplesMeta<'a> {
    pub model: &'a str,
    pub order: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub standardization: Option<Standardization>,
    pub diagnostics: Option<&'a Diagnostics>,
    pub hyper: Option<&'a ModelTwoHyper>,
    pub warnings: &'a [String],
}

/// Sidecar written next to a posterior spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumMeta {
    pub n_samples: usize,
    pub unstable_fraction: f64,
    pub level: f64,
    pub excluded_evaluations: usize,
}

impl SpectrumMeta {
    pub fn of(ps: &PosteriorSpectrum) -> Self {
        Self {
            n_samples: ps.estimate.n_samples,
            unstable_fraction: ps.unstable_fraction,
            level: ps.level,
            excluded_evaluations: ps.total_excluded(),
        }
    }
}

fn prepare(ts: &TimeSeries, standardize: bool) -> CliResult<(TimeSeries, Option<Standardization>)> {
    if standardize {
        let (z, s) = ts.standardized()?;
        Ok((z, Some(s)))
    } else {
        Ok((ts.clone(), None))
    }
}

fn restore(theta: &ARParams, std: Option<Standardization>) -> ARParams {
    match std {
        Some(s) => s.restore_params(theta),
        None => theta.clone(),
    }
}

pub fn standardization_of(
    ts: &TimeSeries,
    standardize: bool,
) -> CliResult<Option<Standardization>> {
    Ok(prepare(ts, standardize)?.1)
}

/// Least-squares fit and its plug-in spectrum, in the units of `ts`.
pub fn run_ase(ts: &TimeSeries, cfg: &FitConfig) -> CliResult<(ARParams, SpectrumEstimate)> {
    let (data, std) = prepare(ts, cfg.standardize)?;
    let theta = restore(&fit_ase(&data, cfg.order)?, std);
    let est = ar_psd(&theta, &cfg.grid)?;
    Ok((theta, est))
}

pub fn run_model_one(ts: &TimeSeries, cfg: &FitConfig) -> CliResult<BayesFit> {
    let start = Instant::now();
    let (data, std) = prepare(ts, cfg.standardize)?;
    let options = McmcOptions {
        n_draws: cfg.n_draws,
        n_chains: cfg.n_chains,
        burn_in: None,
        seed: cfg.seed,
        noise_prior: cfg.noise_prior,
    };
    let mut samples = sample_posterior_mcmc(&data, cfg.order, &cfg.model_one, &options)?;
    if let Some(s) = std {
        samples.scale_noise(s.psd_factor());
    }
    let diagnostics = if samples.n_chains >= 2 {
        Some(chain_diagnostics(&samples)?)
    } else {
        None
    };
    let spectrum = psd_posterior(&samples, &cfg.grid, cfg.level)?;
    let mut warnings = samples.warnings.clone();
    if let Some(d) = &diagnostics {
        warnings.extend(diagnostic_warnings(d));
    }
    Ok(BayesFit {
        spectrum,
        samples,
        diagnostics,
        hyper: None,
        cv: None,
        map: None,
        runtime_seconds: start.elapsed().as_secs_f64(),
        warnings,
    })
}

pub fn diagnostic_warnings(d: &Diagnostics) -> Vec<String> {
    let mut out = Vec::new();
    for (j, (r, e)) in d.rhat.iter().zip(&d.ess).enumerate() {
        if r.is_nan() || *r > RHAT_WARN {
            out.push(format!(
                "parameter {j}: split R-hat {r:.3} exceeds {RHAT_WARN}"
            ));
        }
        if e.is_nan() || *e < ESS_WARN {
            out.push(format!(
                "parameter {j}: effective sample size {e:.0} below {ESS_WARN}"
            ));
        }
    }
    out
}

pub fn default_model_two(p: usize) -> ModelTwoHyper {
    ModelTwoHyper::constant(p, 0.0, 1.0, 1.0, 1.0)
}

pub fn run_model_two(ts: &TimeSeries, cfg: &FitConfig) -> CliResult<BayesFit> {
    let start = Instant::now();
    let (data, std) = prepare(ts, cfg.standardize)?;
    let p = cfg.order;
    let mut warnings = Vec::new();
    let mut cv = None;
    let hyper = match cfg.cv_folds {
        Some(requested) => {
            let feasible = max_feasible_folds(data.len(), p);
            let folds = requested.min(feasible);
            if folds < 2 {
                warnings.push(format!(
                    "series of length {} is too short for cross-validation at order {p}; using default hyperparameters",
                    data.len()
                ));
                cfg.model_two
                    .clone()
                    .unwrap_or_else(|| default_model_two(p))
            } else {
                if folds < requested {
                    warnings.push(format!(
                        "{requested} folds would leave test blocks shorter than p + 2; using {folds} folds"
                    ));
                }
                let result = grid_search_cv(&data, p, &HyperGrid::default(), folds)?;
                let best = result.best.clone();
                cv = Some(result);
                best
            }
        }
        None => cfg
            .model_two
            .clone()
            .unwrap_or_else(|| default_model_two(p)),
    };
    let post = nig_posterior(&data, p, &hyper)?;
    warnings.extend(post.warnings.iter().cloned());
    let map = restore(&map_estimate(&data, p, &hyper)?, std);
    let mut samples = sample_nig(&post, cfg.n_draws * cfg.n_chains, cfg.seed)?;
    if let Some(s) = std {
        samples.scale_noise(s.psd_factor());
    }
    let spectrum = psd_posterior(&samples, &cfg.grid, cfg.level)?;
    Ok(BayesFit {
        spectrum,
        samples,
        diagnostics: None,
        hyper: Some(hyper),
        cv,
        map: Some(map),
        runtime_seconds: start.elapsed().as_secs_f64(),
        warnings,
    })
}

pub fn default_folds() -> usize {
    DEFAULT_FOLDS
}

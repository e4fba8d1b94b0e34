//! Bayesian autoregressive spectral estimation.
//!
//! An AR(p) model has a closed-form power spectral density,
//! `S(ξ) = σ² / |1 − Σ a_k e^{−i2πξk}|²`. Instead of plugging a single
//! least-squares fit into that formula, this crate samples the posterior
//! over `(a, σ²)` and pushes every draw through the PSD map, giving a
//! posterior over spectra with pointwise credible bands.
//!
//! Two posteriors are provided:
//!
//! * [`mcmc`]: Gaussian coefficient prior with a half-Normal noise prior,
//!   sampled with adaptive random-walk Metropolis.
//! * [`conjugate`]: Normal-Inverse-Gamma prior with a closed-form posterior,
//!   exact sampling, MAP estimates and grid-search cross-validation.
//!
//! Deterministic baselines (least-squares AR fit and the Periodogram) live in
//! [`armodel`] and [`spectrum`].

// Negated comparisons are how NaN gets rejected in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod armodel;
pub mod conjugate;
mod error;
pub mod mcmc;
pub mod posterior_psd;
pub mod spectrum;
pub mod stats;
pub mod timeseries;

pub use armodel::{
    conditional_log_likelihood, design_matrix, fit_ase, stability_check, ARParams, DesignData,
    Gram, Stability,
};
pub use conjugate::{
    grid_search_cv, map_estimate, nig_posterior, sample_nig, CvResult, HyperGrid, ModelTwoHyper,
    NIGPosterior,
};
pub use error::{Error, Result};
pub use mcmc::{
    chain_diagnostics, log_posterior_model1, sample_posterior_mcmc, Diagnostics, McmcOptions,
    ModelOneHyper, NoisePrior, PosteriorSamples,
};
pub use posterior_psd::{posterior_peaks, psd_posterior, PosteriorSpectrum, SpectrumCenter};
pub use spectrum::{
    ar_psd, find_peaks, laplace_true_psd, periodogram, FrequencyGrid, Peak, PeakSet,
    SpectrumEstimate,
};
pub use timeseries::{
    acf, load_csv, pacf, simulate_ar, simulate_gp_laplace, subsample_prefix, LaplaceKernelParams,
    TimeSeries, ValueColumn,
};

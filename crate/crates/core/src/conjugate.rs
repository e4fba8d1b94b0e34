//! Model II: Normal-Inverse-Gamma prior `a | σ² ~ N(μ₀, σ²/λ · I)`,
//! `σ² ~ InvGamma(α, β)`, which is conjugate to the conditional AR
//! likelihood.
//!
//! With `(X, y)` the lagged design, the posterior is NIG with
//!
//! ```text
//! Σ⁻¹ = λI + XᵀX
//! μ   = Σ (λμ₀ + Xᵀy)
//! ᾱ   = α + (T − p)/2
//! β̄   = β + (λμ₀ᵀμ₀ + yᵀy − μᵀΣ⁻¹μ)/2
//! ```
//!
//! Only a single realization of the signal is supported, so the MAP noise
//! variance uses the denominator `2(α + 1) + T`, where `T` counts all
//! samples of the series, including the `p` conditioning samples.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::armodel::{design_rows, segment_log_likelihood, ARParams, Gram};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::timeseries::TimeSeries;

pub const DEFAULT_FOLDS: usize = 5;
const ILL_CONDITIONED: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTwoHyper {
    pub mu0: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ModelTwoHyper {
    /// `μ₀ = level · 1`.
    pub fn constant(p: usize, level: f64, lambda: f64, alpha: f64, beta: f64) -> Self {
        Self {
            mu0: vec![level; p],
            lambda,
            alpha,
            beta,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.mu0.len() != p {
            return Err(Error::invalid(format!(
                "prior mean has length {} but the model order is {p}",
                self.mu0.len()
            )));
        }
        if !(self.lambda > 0.0 && self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::invalid("lambda, alpha and beta must be positive"));
        }
        if self.mu0.iter().any(|m| !m.is_finite())
            || !(self.lambda.is_finite() && self.alpha.is_finite() && self.beta.is_finite())
        {
            return Err(Error::invalid("Model II hyperparameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NIGPosterior {
    pub mu: DVector<f64>,
    /// Σ⁻¹
    pub precision: DMatrix<f64>,
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub n_rows: usize,
    pub warnings: Vec<String>,
    chol: Cholesky<f64, Dyn>,
}

impl NIGPosterior {
    pub fn order(&self) -> usize {
        self.mu.len()
    }

    /// Σ
    pub fn covariance_scale(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `E[σ²] = β̄/(ᾱ − 1)`, defined for `ᾱ > 1`.
    pub fn noise_variance_mean(&self) -> Option<f64> {
        (self.alpha_bar > 1.0).then(|| self.beta_bar / (self.alpha_bar - 1.0))
    }

    /// Marginal covariance of the coefficients, `β̄/(ᾱ − 1) · Σ`.
    pub fn coefficient_covariance(&self) -> Option<DMatrix<f64>> {
        self.noise_variance_mean()
            .map(|m| self.covariance_scale() * m)
    }

    /// Unnormalized joint log-density of `(a, σ²)`:
    /// `−(ᾱ + 1 + p/2) log σ² − (β̄ + ½(a−μ)ᵀΣ⁻¹(a−μ)) / σ²`.
    pub fn log_density(&self, a: &[f64], noise_variance: f64) -> f64 {
        if !(noise_variance > 0.0) {
            return f64::NEG_INFINITY;
        }
        let d = DVector::from_column_slice(a) - &self.mu;
        let quad = (&self.precision * &d).dot(&d);
        -(self.alpha_bar + 1.0 + 0.5 * self.order() as f64) * noise_variance.ln()
            - (self.beta_bar + 0.5 * quad) / noise_variance
    }
}

fn check_hyper(p: usize, hyper: &ModelTwoHyper) -> Result<()> {
    hyper.validate(p)
}

/// Conjugate update from sufficient statistics.
pub fn nig_from_gram(gram: &Gram, hyper: &ModelTwoHyper) -> Result<NIGPosterior> {
    let p = gram.order();
    check_hyper(p, hyper)?;
    let mu0 = DVector::from_column_slice(&hyper.mu0);
    let mut precision = gram.xtx.clone();
    for i in 0..p {
        precision[(i, i)] += hyper.lambda;
    }
    // symmetrize against round-off in XᵀX
    precision = (&precision + precision.transpose()) * 0.5;
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))?;
    let rhs = &mu0 * hyper.lambda + &gram.xty;
    let mu = chol.solve(&rhs);

    // λμ₀ᵀμ₀ + yᵀy − μᵀΣ⁻¹μ, rearranged as ‖y − Xμ‖² + λ‖μ − μ₀‖²
    let quad = gram.rss(&mu) + hyper.lambda * (&mu - &mu0).norm_squared();
    let beta_bar = hyper.beta + 0.5 * quad;
    if !(beta_bar > 0.0 && beta_bar.is_finite()) {
        return Err(Error::Numerical(format!(
            "posterior scale β̄ = {beta_bar} is not positive"
        )));
    }

    let mut warnings = Vec::new();
    if p > 0 {
        let eig = precision.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        if hi / lo > ILL_CONDITIONED {
            warnings.push(format!(
                "posterior precision is ill-conditioned (condition number {:.3e})",
                hi / lo
            ));
        }
    }

    Ok(NIGPosterior {
        mu,
        precision,
        alpha_bar: hyper.alpha + 0.5 * gram.n_rows as f64,
        beta_bar,
        n_rows: gram.n_rows,
        warnings,
        chol,
    })
}

/// Closed-form Model II posterior. Series with at most `p` samples give the
/// prior back.
pub fn nig_posterior(ts: &TimeSeries, p: usize, hyper: &ModelTwoHyper) -> Result<NIGPosterior> {
    if ts.len() < p {
        return Err(Error::SeriesTooShort {
            len: ts.len(),
            needed: p,
            context: format!("Model II posterior of order {p}"),
        });
    }
    nig_from_gram(&design_rows(ts.values(), p).gram(), hyper)
}

/// Exact draws: `σ² ~ InvGamma(ᾱ, β̄)`, then `a | σ² ~ N(μ, σ²Σ)`.
pub fn sample_nig(post: &NIGPosterior, n_draws: usize, seed: u64) -> Result<PosteriorSamples> {
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be at least 1"));
    }
    let p = post.order();
    let gamma = Gamma::new(post.alpha_bar, 1.0 / post.beta_bar)
        .map_err(|e| Error::Numerical(format!("invalid inverse-gamma parameters: {e}")))?;
    let upper = post.chol.l().transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let g: f64 = gamma.sample(&mut rng);
        let s2 = 1.0 / g;
        let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
        // Lᵀw = z gives w ~ N(0, Σ)
        let w = upper
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Factorization { jitters: vec![] })?;
        let a = &post.mu + w * s2.sqrt();
        draws.push(ARParams {
            coefficients: a.iter().copied().collect(),
            noise_variance: s2,
        });
    }
    PosteriorSamples::new(p, draws, 1, seed)
}

fn map_from_gram(gram: &Gram, hyper: &ModelTwoHyper, series_len: usize) -> Result<ARParams> {
    let post = nig_from_gram(gram, hyper)?;
    let mu0 = DVector::from_column_slice(&hyper.mu0);
    let a = post.mu;
    let num = 2.0 * hyper.beta + hyper.lambda * (&a - &mu0).norm_squared() + gram.rss(&a);
    let den = 2.0 * (hyper.alpha + 1.0) + series_len as f64;
    ARParams::new(a.iter().copied().collect(), num / den)
}

/// MAP estimate `(a_M, σ²_M)` for a single realization.
pub fn map_estimate(ts: &TimeSeries, p: usize, hyper: &ModelTwoHyper) -> Result<ARParams> {
    if ts.len() < p {
        return Err(Error::SeriesTooShort {
            len: ts.len(),
            needed: p,
            context: format!("Model II MAP of order {p}"),
        });
    }
    map_from_gram(&design_rows(ts.values(), p).gram(), hyper, ts.len())
}

/// Candidate hyperparameters; `μ₀` ranges over constant vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub mu0_levels: Vec<f64>,
}

impl Default for HyperGrid {
    /// `λ, α, β ∈ {0.1, 1, 10, 100}` and `μ₀ ∈ {−10, −8, …, 10}·1`.
    fn default() -> Self {
        let ladder = vec![0.1, 1.0, 10.0, 100.0];
        Self {
            lambdas: ladder.clone(),
            alphas: ladder.clone(),
            betas: ladder,
            mu0_levels: (-5..=5).map(|k| 2.0 * k as f64).collect(),
        }
    }
}

impl HyperGrid {
    pub fn single(lambda: f64, alpha: f64, beta: f64, mu0_level: f64) -> Self {
        Self {
            lambdas: vec![lambda],
            alphas: vec![alpha],
            betas: vec![beta],
            mu0_levels: vec![mu0_level],
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.alphas.len() * self.betas.len() * self.mu0_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// λ-major, then α, β, μ₀.
    pub fn candidates(&self, p: usize) -> Vec<(f64, ModelTwoHyper)> {
        let mut out = Vec::with_capacity(self.len());
        for &lambda in &self.lambdas {
            for &alpha in &self.alphas {
                for &beta in &self.betas {
                    for &level in &self.mu0_levels {
                        out.push((
                            level,
                            ModelTwoHyper::constant(p, level, lambda, alpha, beta),
                        ));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu0: f64,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: ModelTwoHyper,
    pub best_index: usize,
    pub n_folds: usize,
    pub rows: Vec<CvRow>,
}

impl CvResult {
    /// `lambda,alpha,beta,mu0_scalar,fold_1…fold_k,mean_score`
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("lambda,alpha,beta,mu0_scalar");
        for k in 1..=self.n_folds {
            let _ = write!(out, ",fold_{k}");
        }
        out.push_str(",mean_score\n");
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.lambda, r.alpha, r.beta, r.mu0);
            for s in &r.fold_scores {
                let _ = write!(out, ",{s}");
            }
            let _ = writeln!(out, ",{}", r.mean_score);
        }
        out
    }
}

/// Contiguous fold boundaries; sizes differ by at most one, larger blocks first.
pub fn fold_bounds(len: usize, n_folds: usize) -> Vec<(usize, usize)> {
    let base = len / n_folds;
    let extra = len % n_folds;
    let mut start = 0;
    (0..n_folds)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let b = (start, start + size);
            start += size;
            b
        })
        .collect()
}

/// Largest fold count whose test blocks all hold at least `p + 2` samples.
pub fn max_feasible_folds(len: usize, p: usize) -> usize {
    len / (p + 2)
}

/// Grid search with contiguous k-fold cross-validation.
///
/// For each candidate the MAP is fitted on the training portion (the
/// segments before and after the test block contribute their own design
/// rows; no transition across the removed block is invented) and scored by
/// the conditional log-likelihood of the test block given its own first `p`
/// samples. The mean fold score is maximized; exact ties keep the earliest
/// candidate.
pub fn grid_search_cv(
    ts: &TimeSeries,
    p: usize,
    grid: &HyperGrid,
    n_folds: usize,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    if n_folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let values = ts.values();
    let bounds = fold_bounds(values.len(), n_folds);
    if bounds.iter().any(|(s, e)| e - s < p + 2) {
        return Err(Error::invalid(format!(
            "{n_folds} folds of a length-{} series leave test blocks shorter than p + 2 = {}",
            values.len(),
            p + 2
        )));
    }

    struct Fold<'a> {
        train: Gram,
        train_len: usize,
        test: &'a [f64],
    }
    let folds: Vec<Fold> = bounds
        .iter()
        .map(|&(s, e)| {
            let mut train = Gram::zeros(p);
            train.add(&design_rows(&values[..s], p).gram());
            train.add(&design_rows(&values[e..], p).gram());
            Fold {
                train,
                train_len: values.len() - (e - s),
                test: &values[s..e],
            }
        })
        .collect();

    let candidates = grid.candidates(p);
    let rows: Vec<CvRow> = candidates
        .par_iter()
        .map(|(level, hyper)| {
            let fold_scores: Vec<f64> = folds
                .iter()
                .map(|f| match map_from_gram(&f.train, hyper, f.train_len) {
                    Ok(theta) => segment_log_likelihood(&theta, f.test),
                    Err(_) => f64::NEG_INFINITY,
                })
                .collect();
            let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            CvRow {
                lambda: hyper.lambda,
                alpha: hyper.alpha,
                beta: hyper.beta,
                mu0: *level,
                fold_scores,
                mean_score,
            }
        })
        .collect();

    let mut best_index = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, r) in rows.iter().enumerate() {
        let s = if r.mean_score.is_nan() {
            f64::NEG_INFINITY
        } else {
            r.mean_score
        };
        if s > best_score {
            best_score = s;
            best_index = i;
        }
    }
    Ok(CvResult {
        best: candidates[best_index].1.clone(),
        best_index,
        n_folds,
        rows,
    })
}

//! Adaptive random-walk Metropolis over an unnormalized log-density on `R^d`.
//!
//! During burn-in the proposal is tuned in two ways: a global log-scale is
//! pushed toward the target acceptance rate with Robbins–Monro steps, and
//! (optionally) once enough burn-in states have been seen the proposal shape
//! switches from the per-coordinate initial scales to the running empirical
//! covariance of the chain. After burn-in the proposal is frozen, so the
//! retained draws come from a time-homogeneous Metropolis kernel.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSettings {
    /// Retained draws per chain.
    pub n_draws: usize,
    pub burn_in: usize,
    pub adapt: bool,
    /// Replace the proposal shape by the empirical burn-in covariance.
    pub learn_covariance: bool,
    pub target_acceptance: f64,
}

impl SamplerSettings {
    pub fn new(n_draws: usize, burn_in: usize) -> Self {
        Self {
            n_draws,
            burn_in,
            adapt: true,
            learn_covariance: true,
            target_acceptance: DEFAULT_TARGET_ACCEPTANCE,
        }
    }

    /// Fixed proposal: no tuning at all during burn-in.
    pub fn fixed(n_draws: usize, burn_in: usize) -> Self {
        Self {
            adapt: false,
            ..Self::new(n_draws, burn_in)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    /// Acceptance rate over the retained (post-burn-in) iterations.
    pub acceptance_rate: f64,
}

impl Chain {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }
}

/// Running mean and covariance (Welford).
struct RunningMoments {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningMoments {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.m2 / (self.n as f64 - 1.0)
    }
}

fn check_inputs(init: &[f64], init_scales: &[f64], settings: &SamplerSettings) -> Result<()> {
    if init.is_empty() {
        return Err(Error::invalid("sampler needs at least one dimension"));
    }
    if init.len() != init_scales.len() {
        return Err(Error::invalid(
            "initial point and scales differ in dimension",
        ));
    }
    if init_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(
            "proposal scales must be positive and finite",
        ));
    }
    if settings.n_draws == 0 {
        return Err(Error::invalid("n_draws must be positive"));
    }
    if !(settings.target_acceptance > 0.0 && settings.target_acceptance < 1.0) {
        return Err(Error::invalid("target acceptance must lie in (0, 1)"));
    }
    Ok(())
}

/// Runs one chain from `init`.
pub fn run_chain<F, R>(
    log_density: F,
    init: &[f64],
    init_scales: &[f64],
    settings: &SamplerSettings,
    rng: &mut R,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    check_inputs(init, init_scales, settings)?;
    let d = init.len();
    let mut state = DVector::from_column_slice(init);
    let mut logp = log_density(state.as_slice());
    if !logp.is_finite() {
        return Err(Error::Numerical(format!(
            "log-density is not finite at the initial point ({logp})"
        )));
    }

    let mut shape = DMatrix::from_diagonal(&DVector::from_column_slice(init_scales));
    let mut log_scale = 0.0_f64;
    let mut learned_shape = false;
    let mut moments = RunningMoments::new(d);
    // covariance learning starts after a short warm-up and refreshes periodically
    let warmup = settings.burn_in / 10;
    let min_states = (10 * d).max(100);
    let refresh = 50;
    let cov_scale = 2.38 * 2.38 / d as f64;

    let mut draws = Vec::with_capacity(settings.n_draws);
    let mut accepted = 0usize;
    let total = settings.burn_in + settings.n_draws;
    let mut z = DVector::zeros(d);

    for it in 0..total {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let step = &shape * &z * log_scale.exp();
        let proposal = &state + step;
        let lq = log_density(proposal.as_slice());
        let log_ratio = if lq.is_finite() {
            lq - logp
        } else {
            f64::NEG_INFINITY
        };
        let accept_prob = log_ratio.min(0.0).exp();
        let u: f64 = rng.random();
        let accept = u < accept_prob;
        if accept {
            state = proposal;
            logp = lq;
        }

        if it < settings.burn_in {
            if settings.adapt {
                let gamma = ((it + 1) as f64).powf(-0.6);
                log_scale += gamma * (accept_prob - settings.target_acceptance);
                if settings.learn_covariance && it >= warmup {
                    moments.push(&state);
                    if moments.n >= min_states && moments.n.is_multiple_of(refresh) {
                        let mut cov = moments.covariance() * cov_scale;
                        let ridge = 1e-10 * cov.diagonal().max().max(f64::MIN_POSITIVE);
                        for i in 0..d {
                            cov[(i, i)] += ridge;
                        }
                        if let Some(chol) = cov.cholesky() {
                            // the covariance shape already carries the 2.38²/d scale
                            if !learned_shape {
                                log_scale = 0.0;
                                learned_shape = true;
                            }
                            shape = chol.unpack();
                        }
                    }
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(state.iter().copied().collect());
        }
    }

    Ok(Chain {
        draws,
        acceptance_rate: accepted as f64 / settings.n_draws as f64,
    })
}

/// Runs one chain per initial point in parallel. Chain `i` uses the ChaCha8
/// stream `i + 1` of `seed`, so results do not depend on scheduling.
pub fn run_chains<F>(
    log_density: F,
    inits: &[Vec<f64>],
    init_scales: &[f64],
    settings: &SamplerSettings,
    seed: u64,
) -> Result<Vec<Chain>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    inits
        .par_iter()
        .enumerate()
        .map(|(i, init)| {
            let mut rng = chain_rng(seed, i);
            run_chain(&log_density, init, init_scales, settings, &mut rng)
        })
        .collect()
}

pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::diagnostics::{ess, mcse_mean};
    use crate::stats::{mean, sample_variance};

    #[test]
    fn standard_normal_target() {
        let target = |x: &[f64]| -0.5 * x[0] * x[0];
        let settings = SamplerSettings::new(10_000, 2000);
        let chains = run_chains(target, &[vec![0.5], vec![-0.5]], &[1.0], &settings, 17).unwrap();
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(0)).collect();
        let all: Vec<f64> = cols.concat();
        let m = mean(&all);
        let se = mcse_mean(&cols);
        assert!(m.abs() < 3.0 * se, "mean {m} se {se}");
        assert!((sample_variance(&all) - 1.0).abs() < 0.1);
        for c in &chains {
            assert!(
                (c.acceptance_rate - 0.3).abs() < 0.1,
                "{}",
                c.acceptance_rate
            );
        }
    }

    #[test]
    fn fixed_proposal_on_correlated_gaussian() {
        // N(m, S) with S = [[1, 0.6], [0.6, 2]]
        let m = [1.0, -2.0];
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let prec = s.clone().try_inverse().unwrap();
        let target = move |x: &[f64]| {
            let v = DVector::from_vec(vec![x[0] - m[0], x[1] - m[1]]);
            -0.5 * (&prec * &v).dot(&v)
        };
        let settings = SamplerSettings::fixed(40_000, 1000);
        let inits = vec![vec![1.0, -2.0]; 4];
        let chains = run_chains(target, &inits, &[1.2, 1.6], &settings, 3).unwrap();
        for j in 0..2 {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
            let est = mean(&cols.concat());
            let se = mcse_mean(&cols);
            assert!((est - m[j]).abs() < 3.0 * se, "coord {j}: {est} ± {se}");
        }
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let prods: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| {
                    c.draws
                        .iter()
                        .map(|x| (x[i] - m[i]) * (x[j] - m[j]))
                        .collect()
                })
                .collect();
            let est = mean(&prods.concat());
            let se = mcse_mean(&prods);
            assert!(
                (est - s[(i, j)]).abs() < 3.0 * se,
                "cov {i}{j}: {est} ± {se}"
            );
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let target = |x: &[f64]| -0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1]);
        let settings = SamplerSettings::new(500, 500);
        let inits = vec![vec![0.0, 0.0]; 3];
        let a = run_chains(target, &inits, &[1.0, 1.0], &settings, 5).unwrap();
        let b = run_chains(target, &inits, &[1.0, 1.0], &settings, 5).unwrap();
        assert_eq!(a, b);
        let c = run_chains(target, &inits, &[1.0, 1.0], &settings, 6).unwrap();
        assert_ne!(a, c);
        assert_ne!(a[0].draws, a[1].draws);
    }

    #[test]
    fn adaptation_learns_badly_scaled_target() {
        // scales differ by 100x; initial isotropic proposal is poor
        let target = |x: &[f64]| -0.5 * (x[0] * x[0] / 1e-4 + x[1] * x[1]);
        let settings = SamplerSettings::new(5000, 5000);
        let chains = run_chains(
            target,
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            &[1.0, 1.0],
            &settings,
            8,
        )
        .unwrap();
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(1)).collect();
        assert!(ess(&cols) > 300.0, "{}", ess(&cols));
        assert!((sample_variance(&cols.concat()) - 1.0).abs() < 0.25);
    }

    #[test]
    fn rejects_bad_start() {
        let target = |_: &[f64]| f64::NEG_INFINITY;
        let mut rng = chain_rng(0, 0);
        assert!(run_chain(
            target,
            &[0.0],
            &[1.0],
            &SamplerSettings::new(10, 10),
            &mut rng
        )
        .is_err());
        let ok = |x: &[f64]| -x[0] * x[0];
        assert!(run_chain(ok, &[0.0], &[0.0], &SamplerSettings::new(10, 10), &mut rng).is_err());
        assert!(run_chain(
            ok,
            &[0.0, 1.0],
            &[1.0],
            &SamplerSettings::new(10, 10),
            &mut rng
        )
        .is_err());
    }
}

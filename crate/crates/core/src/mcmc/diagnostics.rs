//! Split-R̂ and effective sample size.
//!
//! Both follow the classic (non rank-normalized) multi-chain definitions:
//! chains are split in half, `W` is the mean within-chain variance, `B/n`
//! the variance of chain means, and `var⁺ = (n−1)/n·W + B/n`. ESS combines
//! the chains' autocovariances into `ρ_t = 1 − (W − mean_m γ_{m,t}) / var⁺`
//! and truncates the sum with Geyer's initial monotone sequence.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::stats::{mean, sample_variance};

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            // drop the middle draw of odd-length chains
            [&c[..half], &c[c.len() - half..]]
        })
        .collect()
}

/// Within-chain mean variance and `var⁺` for equal-length chains.
fn variance_components(chains: &[&[f64]]) -> (f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| sample_variance(c)).sum::<f64>() / m;
    let b_over_n = if chains.len() > 1 {
        sample_variance(&means)
    } else {
        0.0
    };
    (w, (n - 1.0) / n * w + b_over_n)
}

/// Split-R̂; `NaN` when within-chain variance vanishes or chains are too short.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let min_len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.is_empty() || min_len < 4 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = split(chains)
        .into_iter()
        .map(|c| &c[..min_len / 2])
        .collect();
    let (w, var_plus) = variance_components(&halves);
    if !(w > 1e-300) {
        return f64::NAN;
    }
    (var_plus / w).sqrt()
}

/// Biased autocovariance `γ_t = Σ (x_i − x̄)(x_{i+t} − x̄) / n` via FFT.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n]
        .iter()
        .map(|c| c.re / (size as f64 * n as f64))
        .collect()
}

/// Multi-chain effective sample size on split chains; `NaN` when the
/// draws have no variance.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let min_len = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.is_empty() || min_len < 4 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = split(chains)
        .into_iter()
        .map(|c| &c[..min_len / 2])
        .collect();
    let m = halves.len();
    let n = halves[0].len();
    let (w, var_plus) = variance_components(&halves);
    if !(var_plus > 1e-300) {
        return f64::NAN;
    }
    let acov: Vec<Vec<f64>> = halves.iter().map(|c| autocovariance(c)).collect();
    // γ is biased (divisor n); rescale the within-chain part to match W
    let rho = |t: usize| -> f64 {
        let mean_acov = acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov * n as f64 / (n as f64 - 1.0)) / var_plus
    };

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

/// Monte Carlo standard error of the pooled mean, `sd / sqrt(ESS)`.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = chains.concat();
    (sample_variance(&all) / ess(chains)).sqrt()
}

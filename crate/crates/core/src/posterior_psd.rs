//! Posterior distribution of the PSD, obtained by pushing each posterior
//! draw of `(a, σ²)` through the AR spectrum.
//!
//! Quantiles are empirical order statistics `x_(⌈qn⌉)` without
//! interpolation, so they commute with any increasing transform (bands of
//! `log S` are the logs of bands of `S`). Draws whose AR polynomial is not
//! stable are kept: the AR spectrum formula is still a valid positive
//! function for them, and the share of such draws is reported. A draw is
//! dropped only at frequencies where its denominator vanishes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::armodel::stability_check;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::spectrum::{
    ar_denominator, find_peaks_in, write_spectrum_csv, FrequencyGrid, PeakSet, SpectrumEstimate,
    POLE_TOLERANCE, PSD_FLOOR,
};
use crate::stats::quantile_sorted;

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumCenter {
    Mean,
    #[default]
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSpectrum {
    /// Pointwise posterior mean with the equal-tailed credible band.
    pub estimate: SpectrumEstimate,
    pub median: Vec<f64>,
    pub level: f64,
    /// Share of draws with a pole on or outside the unit circle.
    pub unstable_fraction: f64,
    /// Per-frequency count of draws dropped because of a pole on the grid.
    pub excluded: Vec<usize>,
}

impl PosteriorSpectrum {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.estimate.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.estimate.psd
    }

    pub fn lower(&self) -> &[f64] {
        self.estimate.lower.as_deref().unwrap_or(&[])
    }

    pub fn upper(&self) -> &[f64] {
        self.estimate.upper.as_deref().unwrap_or(&[])
    }

    pub fn center(&self, center: SpectrumCenter) -> &[f64] {
        match center {
            SpectrumCenter::Mean => self.mean(),
            SpectrumCenter::Median => &self.median,
        }
    }

    /// Estimate whose point value is the chosen center, band unchanged.
    pub fn centered_estimate(&self, center: SpectrumCenter) -> SpectrumEstimate {
        SpectrumEstimate {
            psd: self.center(center).to_vec(),
            ..self.estimate.clone()
        }
    }

    /// Mean band width `upper − lower` over the grid points selected by `keep`.
    pub fn mean_band_width(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let (sum, n) = self
            .grid()
            .freqs()
            .iter()
            .zip(self.lower().iter().zip(self.upper()))
            .filter(|(f, _)| keep(**f))
            .fold((0.0, 0usize), |(s, n), (_, (l, h))| (s + h - l, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    pub fn total_excluded(&self) -> usize {
        self.excluded.iter().sum()
    }

    /// Spectrum CSV with an extra trailing `median` column.
    pub fn to_csv_string(&self, notes: &[String]) -> String {
        let mut notes = notes.to_vec();
        notes.push(format!("level: {}", self.level));
        notes.push(format!("unstable_fraction: {}", self.unstable_fraction));
        notes.push(format!("excluded_evaluations: {}", self.total_excluded()));
        write_spectrum_csv(&self.estimate, Some(&self.median), &notes)
    }
}

/// Pointwise posterior mean, median and `level` credible band of the PSD.
pub fn psd_posterior(
    samples: &PosteriorSamples,
    grid: &FrequencyGrid,
    level: f64,
) -> Result<PosteriorSpectrum> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "credible level {level} is not in (0, 1)"
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("no posterior draws"));
    }
    let unstable = samples
        .draws
        .par_iter()
        .filter(|d| !stability_check(d).stable)
        .count();
    let q_lo = (1.0 - level) / 2.0;
    let q_hi = 1.0 - q_lo;

    let columns: Vec<Result<(f64, f64, f64, f64, usize)>> = grid
        .freqs()
        .par_iter()
        .map(|&xi| {
            let mut vals: Vec<f64> = samples
                .draws
                .iter()
                .filter_map(|d| {
                    let den = ar_denominator(&d.coefficients, xi);
                    (den >= POLE_TOLERANCE).then(|| (d.noise_variance / den).max(PSD_FLOOR))
                })
                .collect();
            let excluded = samples.len() - vals.len();
            if vals.is_empty() {
                return Err(Error::Pole { frequency: xi });
            }
            vals.sort_by(f64::total_cmp);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            Ok((
                mean,
                quantile_sorted(&vals, 0.5),
                quantile_sorted(&vals, q_lo),
                quantile_sorted(&vals, q_hi),
                excluded,
            ))
        })
        .collect();

    let n = grid.len();
    let (mut mean, mut median, mut lower, mut upper, mut excluded) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for c in columns {
        let (m, med, lo, hi, ex) = c?;
        mean.push(m);
        median.push(med);
        lower.push(lo);
        upper.push(hi);
        excluded.push(ex);
    }
    let estimate =
        SpectrumEstimate::new(grid.clone(), mean, Some(lower), Some(upper), samples.len())?;
    Ok(PosteriorSpectrum {
        estimate,
        median,
        level,
        unstable_fraction: unstable as f64 / samples.len() as f64,
        excluded,
    })
}

/// Peaks of the chosen pointwise center of the posterior PSD.
pub fn posterior_peaks(
    ps: &PosteriorSpectrum,
    center: SpectrumCenter,
    min_prominence_ratio: f64,
) -> PeakSet {
    find_peaks_in(ps.grid(), ps.center(center), min_prominence_ratio)
}

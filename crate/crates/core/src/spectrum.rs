//! Frequency grids, the closed-form AR spectrum, the Periodogram, the
//! Laplace-kernel (Lorentzian) spectrum and peak picking.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::armodel::ARParams;
use crate::error::{Error, Result};
use crate::timeseries::{LaplaceKernelParams, TimeSeries};

/// Values below this are clamped so log-PSD stays finite.
pub const PSD_FLOOR: f64 = 1e-30;
/// A squared denominator below this is treated as a pole on the grid.
pub const POLE_TOLERANCE: f64 = 1e-30;
pub const DEFAULT_GRID_SIZE: usize = 512;
pub const DEFAULT_PEAK_RATIO: f64 = 0.05;

/// Frequencies in cycles per sample, strictly increasing within `[0, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    dt: f64,
}

impl FrequencyGrid {
    pub fn new(freqs: Vec<f64>, dt: f64) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::invalid("frequency grid is empty"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("grid dt must be positive"));
        }
        if freqs[0] < 0.0 || *freqs.last().unwrap() > 0.5 {
            return Err(Error::invalid(
                "grid frequencies must lie in [0, 0.5] cycles/sample",
            ));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "grid frequencies must be strictly increasing",
            ));
        }
        Ok(Self { freqs, dt })
    }

    /// `n` equally spaced points covering `[0, 0.5]`.
    pub fn uniform(n: usize, dt: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a uniform grid needs at least 2 points"));
        }
        let step = 0.5 / (n - 1) as f64;
        let mut freqs: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        freqs[n - 1] = 0.5;
        Self::new(freqs, dt)
    }

    /// `j / T` for `j = 0..=⌊T/2⌋`.
    pub fn fourier(len: usize, dt: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid("a Fourier grid needs at least 2 samples"));
        }
        Self::new((0..=len / 2).map(|j| j as f64 / len as f64).collect(), dt)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Frequencies in cycles per time unit.
    pub fn physical(&self) -> Vec<f64> {
        self.freqs.iter().map(|f| f / self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub grid: FrequencyGrid,
    pub psd: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Number of posterior draws behind the estimate; 0 for point estimates.
    pub n_samples: usize,
}

impl SpectrumEstimate {
    pub fn point(grid: FrequencyGrid, psd: Vec<f64>) -> Result<Self> {
        Self::new(grid, psd, None, None, 0)
    }

    pub fn new(
        grid: FrequencyGrid,
        psd: Vec<f64>,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
        n_samples: usize,
    ) -> Result<Self> {
        let n = grid.len();
        if psd.len() != n {
            return Err(Error::invalid("psd length differs from grid length"));
        }
        if psd.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Numerical(
                "PSD values must be positive and finite".into(),
            ));
        }
        match (&lower, &upper) {
            (Some(lo), Some(hi)) => {
                if lo.len() != n || hi.len() != n {
                    return Err(Error::invalid("band length differs from grid length"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(*l > 0.0) || l > h) {
                    return Err(Error::Numerical(
                        "band must satisfy 0 < lower <= upper".into(),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::invalid(
                    "lower and upper bands must be given together",
                ))
            }
        }
        Ok(Self {
            grid,
            psd,
            lower,
            upper,
            n_samples,
        })
    }

    /// CSV with columns `frequency_per_sample,frequency_physical,psd,lower,upper`,
    /// preceded by `#` comment lines.
    pub fn to_csv_string(&self, notes: &[String]) -> String {
        write_spectrum_csv(self, None, notes)
    }
}

pub(crate) fn write_spectrum_csv(
    est: &SpectrumEstimate,
    median: Option<&[f64]>,
    notes: &[String],
) -> String {
    let mut out = String::new();
    for note in notes {
        let _ = writeln!(out, "# {note}");
    }
    let _ = writeln!(out, "# grid_size: {}", est.grid.len());
    let _ = writeln!(out, "# dt: {}", est.grid.dt());
    let _ = writeln!(out, "# n_samples: {}", est.n_samples);
    out.push_str("frequency_per_sample,frequency_physical,psd,lower,upper");
    if median.is_some() {
        out.push_str(",median");
    }
    out.push('\n');
    let opt =
        |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
    for (i, f) in est.grid.freqs().iter().enumerate() {
        let _ = write!(
            out,
            "{f},{},{},{},{}",
            f / est.grid.dt(),
            est.psd[i],
            opt(&est.lower, i),
            opt(&est.upper, i)
        );
        if let Some(m) = median {
            let _ = write!(out, ",{}", m[i]);
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV written by [`SpectrumEstimate::to_csv_string`] (and the
/// posterior variant with a trailing `median` column).
pub fn read_spectrum_csv(text: &str) -> Result<(SpectrumEstimate, Option<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (fi, pi, psdi) = match (
        col("frequency_per_sample"),
        col("frequency_physical"),
        col("psd"),
    ) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::invalid("spectrum CSV is missing required columns")),
    };
    let (li, ui, mi) = (col("lower"), col("upper"), col("median"));

    let mut freqs = Vec::new();
    let mut dt = None;
    let mut psd = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut median = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            match rec.get(i) {
                None | Some("") => Ok(None),
                Some(s) => s.parse::<f64>().map(Some).map_err(|_| {
                    Error::invalid(format!("data row {}: cannot parse {s:?}", row + 1))
                }),
            }
        };
        let f = num(fi)?.ok_or_else(|| Error::invalid("missing frequency"))?;
        let fp = num(pi)?.ok_or_else(|| Error::invalid("missing physical frequency"))?;
        if dt.is_none() && fp > 0.0 {
            dt = Some(f / fp);
        }
        freqs.push(f);
        psd.push(num(psdi)?.ok_or_else(|| Error::invalid("missing psd"))?);
        if let Some(v) = li.map(num).transpose()?.flatten() {
            lower.push(v);
        }
        if let Some(v) = ui.map(num).transpose()?.flatten() {
            upper.push(v);
        }
        if let Some(v) = mi.map(num).transpose()?.flatten() {
            median.push(v);
        }
    }
    let n = freqs.len();
    let grid = FrequencyGrid::new(freqs, dt.unwrap_or(1.0))?;
    let band = |v: Vec<f64>| if v.len() == n { Some(v) } else { None };
    let est = SpectrumEstimate::new(grid, psd, band(lower), band(upper), 0)?;
    Ok((est, band(median)))
}

/// `|1 − Σ_k a_k e^{−i2πξk}|²`
pub(crate) fn ar_denominator(a: &[f64], xi: f64) -> f64 {
    let w = 2.0 * PI * xi;
    let (mut re, mut im) = (1.0, 0.0);
    for (k, ak) in a.iter().enumerate() {
        let phase = w * (k + 1) as f64;
        re -= ak * phase.cos();
        im += ak * phase.sin();
    }
    re * re + im * im
}

/// `S(ξ) = σ² / |1 − Σ a_k e^{−i2πξk}|²` on the grid.
pub fn ar_psd(theta: &ARParams, grid: &FrequencyGrid) -> Result<SpectrumEstimate> {
    theta.validate()?;
    let mut psd = Vec::with_capacity(grid.len());
    for &xi in grid.freqs() {
        let d = ar_denominator(&theta.coefficients, xi);
        if d < POLE_TOLERANCE {
            return Err(Error::Pole { frequency: xi });
        }
        psd.push(theta.noise_variance / d);
    }
    SpectrumEstimate::point(grid.clone(), psd)
}

/// `P(j/T) = |Σ_t x_t e^{−i2π jt/T}|² / T` for `j = 0..=⌊T/2⌋`, one-sided
/// without doubling.
pub fn periodogram(ts: &TimeSeries, demean: bool) -> Result<SpectrumEstimate> {
    let n = ts.len();
    if n < 2 {
        return Err(Error::SeriesTooShort {
            len: n,
            needed: 2,
            context: "periodogram".into(),
        });
    }
    let m = if demean { ts.mean() } else { 0.0 };
    let mut buf: Vec<Complex<f64>> = ts
        .values()
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let psd = buf[..=n / 2]
        .iter()
        .map(|c| (c.norm_sqr() / n as f64).max(PSD_FLOOR))
        .collect();
    SpectrumEstimate::point(FrequencyGrid::fourier(n, ts.dt())?, psd)
}

/// Mean of the two-sided periodogram rebuilt from its one-sided half by
/// symmetry; by Parseval it equals the mean square of the transformed signal.
pub fn periodogram_mean_square(est: &SpectrumEstimate, len: usize) -> f64 {
    let p = &est.psd;
    let mut total = p[0];
    for j in 1..p.len() {
        let mirrored = !(len.is_multiple_of(2) && j == len / 2);
        total += if mirrored { 2.0 * p[j] } else { p[j] };
    }
    total / len as f64
}

/// Lorentzian spectrum of the Laplace kernel in per-sample units,
/// `2σ²(l/dt) / (1 + (2πξ l/dt)²)`, where `dt` comes from the grid.
pub fn laplace_true_psd(
    kernel: &LaplaceKernelParams,
    grid: &FrequencyGrid,
) -> Result<SpectrumEstimate> {
    kernel.validate()?;
    let l = kernel.lengthscale / grid.dt();
    let psd = grid
        .freqs()
        .iter()
        .map(|xi| {
            let v = 2.0 * kernel.marginal_variance * l / (1.0 + (2.0 * PI * xi * l).powi(2));
            v.max(PSD_FLOOR)
        })
        .collect();
    SpectrumEstimate::point(grid.clone(), psd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub frequency_per_sample: f64,
    /// Cycles per time unit.
    pub frequency: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// Ordered by frequency.
    pub peaks: Vec<Peak>,
    /// Index into `peaks` of the highest peak; `None` when empty.
    pub main_peak_index: Option<usize>,
}

impl PeakSet {
    pub fn main_peak(&self) -> Option<&Peak> {
        self.main_peak_index.map(|i| &self.peaks[i])
    }
}

pub fn find_peaks(est: &SpectrumEstimate, min_prominence_ratio: f64) -> PeakSet {
    find_peaks_in(&est.grid, &est.psd, min_prominence_ratio)
}

/// Strict local maxima with height at least `min_prominence_ratio` times the
/// global maximum. A boundary bin counts when it exceeds its only neighbour.
pub fn find_peaks_in(grid: &FrequencyGrid, values: &[f64], min_prominence_ratio: f64) -> PeakSet {
    let n = values.len();
    let mut peaks = Vec::new();
    if n >= 2 {
        let global = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = min_prominence_ratio * global;
        for i in 0..n {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i == n - 1 || values[i] > values[i + 1];
            if left && right && values[i] >= threshold {
                let f = grid.freqs()[i];
                peaks.push(Peak {
                    index: i,
                    frequency_per_sample: f,
                    frequency: f / grid.dt(),
                    height: values[i],
                });
            }
        }
    }
    let main_peak_index = peaks
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.height.total_cmp(&b.1.height).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    PeakSet {
        peaks,
        main_peak_index,
    }
}

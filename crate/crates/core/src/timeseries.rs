//! Uniformly sampled series: synthetic generators, CSV ingestion and
//! autocorrelation diagnostics.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::armodel::{stability_check, ARParams};
use crate::error::{Error, Result};

/// Largest series length `simulate_gp_laplace` will factor densely.
pub const GP_MAX_LEN: usize = 10_000;

/// Jitter ladder for the kernel factorization, relative to the marginal variance.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt: f64,
    label: String,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("time series must have at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("value at index {i} is not finite")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        Ok(Self {
            values,
            dt,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance (divisor n).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.values.len() as f64
    }

    /// Removes the mean and divides by the standard deviation. The returned
    /// [`Standardization`] maps PSDs and AR noise variances back to the
    /// original units.
    pub fn standardized(&self) -> Result<(TimeSeries, Standardization)> {
        let mean = self.mean();
        let scale = self.variance().sqrt();
        if !(scale > 0.0) {
            return Err(Error::invalid("cannot standardize a constant series"));
        }
        let values = self.values.iter().map(|v| (v - mean) / scale).collect();
        let ts = TimeSeries::new(values, self.dt, self.label.clone())?;
        Ok((ts, Standardization { mean, scale }))
    }

    pub fn demeaned(&self) -> TimeSeries {
        let m = self.mean();
        TimeSeries {
            values: self.values.iter().map(|v| v - m).collect(),
            dt: self.dt,
            label: self.label.clone(),
        }
    }

    /// CSV with columns `index,time,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("index,time,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{v}", i as f64 * self.dt);
        }
        out
    }
}

/// Affine map `x = mean + scale · z` applied when a series was standardized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

impl Standardization {
    /// AR coefficients are scale-free; only the noise variance changes.
    pub fn restore_params(&self, theta: &ARParams) -> ARParams {
        ARParams {
            coefficients: theta.coefficients.clone(),
            noise_variance: theta.noise_variance * self.scale * self.scale,
        }
    }

    pub fn psd_factor(&self) -> f64 {
        self.scale * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceKernelParams {
    pub marginal_variance: f64,
    pub lengthscale: f64,
    pub obs_noise_variance: f64,
}

impl LaplaceKernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.marginal_variance > 0.0 && self.marginal_variance.is_finite()) {
            return Err(Error::invalid("marginal variance must be positive"));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::invalid("lengthscale must be positive"));
        }
        if !(self.obs_noise_variance >= 0.0 && self.obs_noise_variance.is_finite()) {
            return Err(Error::invalid(
                "observation noise variance must be nonnegative",
            ));
        }
        Ok(())
    }

    /// `K(τ) = σ² exp(−|τ| / l)`
    pub fn covariance(&self, tau: f64) -> f64 {
        self.marginal_variance * (-tau.abs() / self.lengthscale).exp()
    }
}

/// Burn-in used when the caller has no preference: `max(10·p, 100)`.
pub fn default_burn_in(order: usize) -> usize {
    (10 * order).max(100)
}

/// Simulates `x_t = Σ a_k x_{t−k} + ε_t` from zero history, discarding the
/// first `burn_in` samples.
pub fn simulate_ar(params: &ARParams, n: usize, burn_in: usize, seed: u64) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    params.validate()?;
    let stability = stability_check(params);
    if !stability.stable {
        return Err(Error::Unstable {
            max_modulus: stability.max_modulus(),
        });
    }

    let a = &params.coefficients;
    let sd = params.noise_variance.sqrt();
    let total = n + burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(total);
    for t in 0..total {
        let eps: f64 = StandardNormal.sample(&mut rng);
        let mut v = sd * eps;
        for (k, ak) in a.iter().enumerate() {
            if t > k {
                v += ak * x[t - 1 - k];
            }
        }
        x.push(v);
    }
    x.drain(..burn_in);
    TimeSeries::new(x, 1.0, format!("ar{}", params.order()))
}

/// Draws one path of a zero-mean GP with Laplace covariance on the grid
/// `τ_i = i·dt`, plus i.i.d. observation noise.
pub fn simulate_gp_laplace(
    kernel: &LaplaceKernelParams,
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<TimeSeries> {
    kernel.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if n > GP_MAX_LEN {
        return Err(Error::invalid(format!(
            "GP series length {n} exceeds the dense factorization limit {GP_MAX_LEN}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    // exp(-dt/l) rounds to 1: every entry of K is identical and the draw is a constant.
    if dt / kernel.lengthscale < f64::EPSILON {
        return Err(Error::invalid(format!(
            "lengthscale {} is too large relative to dt = {dt}: the covariance is numerically constant",
            kernel.lengthscale
        )));
    }

    let k = DMatrix::from_fn(n, n, |i, j| kernel.covariance((i as f64 - j as f64) * dt));
    let l = factor_with_jitter(&k, kernel.marginal_variance)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise_sd = kernel.obs_noise_variance.sqrt();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = 0.0;
        for j in 0..=i {
            v += l[(i, j)] * z[j];
        }
        values.push(v);
    }
    for v in values.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += noise_sd * e;
    }
    TimeSeries::new(values, dt, "gp-laplace")
}

/// Lower Cholesky factor of `k + jitter·I`, escalating the jitter ×10 from
/// `1e-10·scale` to `1e-4·scale` until the factorization succeeds.
pub(crate) fn factor_with_jitter(k: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let mut tried = Vec::new();
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        tried.push(jitter);
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = m.cholesky() {
            return Ok(chol.unpack());
        }
        rel *= 10.0;
    }
    Err(Error::Factorization { jitters: tried })
}

/// Which CSV column carries the observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueColumn {
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

impl std::str::FromStr for ValueColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ValueColumn::Index(i),
            Err(_) => ValueColumn::Name(s.to_string()),
        })
    }
}

/// Reads one column of a comma-separated file.
///
/// A header row is required when the column is selected by name. When it is
/// selected by index, the first row is treated as a header only if its cell
/// does not parse as a number. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, column: &ValueColumn, dt: f64) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };

    let mut records = reader.records();
    let mut values = Vec::new();
    let (index, column_name) = match column {
        ValueColumn::Name(name) => {
            let header = match records.next() {
                Some(r) => r?,
                None => return Err(parse_err(1, name, "file is empty".into())),
            };
            let idx = header
                .iter()
                .position(|h| h.trim_matches('"') == name)
                .ok_or_else(|| parse_err(1, name, "column not found in header".into()))?;
            (idx, name.clone())
        }
        ValueColumn::Index(i) => (*i, format!("#{i}")),
    };
    let mut row = if matches!(column, ValueColumn::Name(_)) {
        1
    } else {
        0
    };

    for record in records {
        let record = record?;
        row += 1;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cell = record
            .get(index)
            .ok_or_else(|| parse_err(row, &column_name, "missing value".into()))?;
        if cell.is_empty() {
            return Err(parse_err(row, &column_name, "missing value".into()));
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => {
                return Err(parse_err(
                    row,
                    &column_name,
                    format!("non-finite value {v}"),
                ))
            }
            Err(_) if row == 1 && matches!(column, ValueColumn::Index(_)) => {}
            Err(_) => {
                return Err(parse_err(
                    row,
                    &column_name,
                    format!("cannot parse {cell:?} as a number"),
                ))
            }
        }
    }
    if values.is_empty() {
        return Err(parse_err(
            row.max(1),
            &column_name,
            "column has no values".into(),
        ));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeries::new(values, dt, label)
}

/// The first `floor(fraction · len)` samples.
pub fn subsample_prefix(ts: &TimeSeries, fraction: f64) -> Result<TimeSeries> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let keep = (fraction * ts.len() as f64).floor() as usize;
    if keep == 0 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {} samples keeps nothing",
            ts.len()
        )));
    }
    TimeSeries::new(ts.values[..keep].to_vec(), ts.dt, ts.label.clone())
}

/// Biased sample autocorrelation of the mean-removed series, lags `0..=max_lag`.
pub fn acf(ts: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let n = ts.len();
    if max_lag >= n {
        return Err(Error::invalid(format!(
            "max_lag {max_lag} must be smaller than the series length {n}"
        )));
    }
    let m = ts.mean();
    let x: Vec<f64> = ts.values.iter().map(|v| v - m).collect();
    let c0: f64 = x.iter().map(|v| v * v).sum::<f64>();
    if !(c0 > 0.0) {
        return Err(Error::invalid(
            "autocorrelation of a constant series is undefined",
        ));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                x[..n - k]
                    .iter()
                    .zip(&x[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / c0
            }
        })
        .collect())
}

/// Partial autocorrelation by Durbin–Levinson on the biased ACF.
pub fn pacf(ts: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(ts, max_lag)?;
    let mut out = vec![1.0; max_lag + 1];
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    let mut v = 1.0;
    for k in 1..=max_lag {
        let num = r[k]
            - phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * r[k - 1 - j])
                .sum::<f64>();
        let kk = if v > 0.0 { num / v } else { 0.0 };
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - kk * prev[prev.len() - 1 - j];
        }
        phi.push(kk);
        v *= 1.0 - kk * kk;
        out[k] = kk;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar(a: &[f64], s2: f64) -> ARParams {
        ARParams::new(a.to_vec(), s2).unwrap()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new(vec![], 1.0, "").is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN], 1.0, "").is_err());
        assert!(TimeSeries::new(vec![1.0], 0.0, "").is_err());
    }

    #[test]
    fn white_noise_variance() {
        let ts = simulate_ar(&ar(&[], 1.0), 1000, 0, 7).unwrap();
        assert_eq!(ts.len(), 1000);
        assert!((ts.variance() - 1.0).abs() < 0.1, "{}", ts.variance());
    }

    #[test]
    fn ar1_stationary_variance() {
        let ts = simulate_ar(&ar(&[0.9], 1.0), 10_000, 1000, 3).unwrap();
        let expect = 1.0 / (1.0 - 0.81);
        assert!(
            (ts.variance() - expect).abs() / expect < 0.1,
            "{}",
            ts.variance()
        );
    }

    #[test]
    fn simulate_ar_is_reproducible_and_rejects_unstable() {
        let p = ar(&[0.5, -0.2], 2.0);
        let a = simulate_ar(&p, 300, 100, 11).unwrap();
        let b = simulate_ar(&p, 300, 100, 11).unwrap();
        assert_eq!(a.values(), b.values());
        let c = simulate_ar(&p, 300, 100, 12).unwrap();
        assert_ne!(a.values(), c.values());
        assert!(matches!(
            simulate_ar(&ar(&[1.1], 1.0), 10, 0, 1),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn gp_lag_one_autocorrelation() {
        let kernel = LaplaceKernelParams {
            marginal_variance: 1.0,
            lengthscale: 10.0,
            obs_noise_variance: 0.0,
        };
        // average over a few seeds; a single path of 2000 samples is noisy at lag 1
        let mut total = 0.0;
        for seed in 0..4 {
            let ts = simulate_gp_laplace(&kernel, 2000, 1.0, seed).unwrap();
            total += acf(&ts, 1).unwrap()[1];
        }
        let r1 = total / 4.0;
        assert!((r1 - (-0.1f64).exp()).abs() < 0.05, "{r1}");
    }

    #[test]
    fn gp_tiny_lengthscale_is_white() {
        let kernel = LaplaceKernelParams {
            marginal_variance: 2.0,
            lengthscale: 1e-6,
            obs_noise_variance: 0.5,
        };
        let ts = simulate_gp_laplace(&kernel, 3000, 1.0, 5).unwrap();
        assert!((ts.variance() - 2.5).abs() / 2.5 < 0.1, "{}", ts.variance());
        assert!(acf(&ts, 1).unwrap()[1].abs() < 3.0 / (3000f64).sqrt());
    }

    #[test]
    fn gp_sample_covariance_converges() {
        let kernel = LaplaceKernelParams {
            marginal_variance: 1.5,
            lengthscale: 3.0,
            obs_noise_variance: 0.0,
        };
        let n = 4;
        let draws: Vec<TimeSeries> = (0..2000)
            .map(|s| simulate_gp_laplace(&kernel, n, 1.0, s).unwrap())
            .collect();
        for i in 0..n {
            for j in i..n {
                let c = draws
                    .iter()
                    .map(|d| d.values()[i] * d.values()[j])
                    .sum::<f64>()
                    / draws.len() as f64;
                let want = kernel.covariance((i as f64 - j as f64) * 1.0);
                assert!(
                    (c - want).abs() < 0.05 * kernel.marginal_variance,
                    "K[{i},{j}]: {c} vs {want}"
                );
            }
        }
    }

    #[test]
    fn gp_guards() {
        let kernel = LaplaceKernelParams {
            marginal_variance: 1.0,
            lengthscale: 1e20,
            obs_noise_variance: 0.0,
        };
        assert!(simulate_gp_laplace(&kernel, 10, 1.0, 0).is_err());
        let ok = LaplaceKernelParams {
            lengthscale: 5.0,
            ..kernel
        };
        assert!(simulate_gp_laplace(&ok, GP_MAX_LEN + 1, 1.0, 0).is_err());
    }

    #[test]
    fn jitter_failure_lists_levels() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match factor_with_jitter(&k, 1.0) {
            Err(Error::Factorization { jitters }) => {
                assert_eq!(jitters.len(), 7);
                assert!((jitters[0] - 1e-10).abs() < 1e-22);
                assert!((jitters[6] - 1e-4).abs() < 1e-16);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prefix() {
        let ts = TimeSeries::new((0..315).map(f64::from).collect(), 1.0, "s").unwrap();
        let sub = subsample_prefix(&ts, 1.0 / 6.0).unwrap();
        assert_eq!(sub.len(), 52);
        assert_eq!(sub.values()[51], 51.0);
        assert_eq!(subsample_prefix(&ts, 1.0).unwrap(), ts);
        let four = TimeSeries::new(vec![1.0, 2.0, 3.0, 4.0], 2.0, "").unwrap();
        let half = subsample_prefix(&four, 0.5).unwrap();
        assert_eq!(half.values(), &[1.0, 2.0]);
        assert_eq!(half.dt(), 2.0);
        assert!(subsample_prefix(&four, 0.0).is_err());
        assert!(subsample_prefix(&four, 1.5).is_err());
        assert!(subsample_prefix(&four, 0.1).is_err());
    }

    #[test]
    fn acf_of_white_noise_vanishes() {
        let ts = simulate_ar(&ar(&[], 1.0), 5000, 0, 1).unwrap();
        let r = acf(&ts, 10).unwrap();
        assert_eq!(r[0], 1.0);
        let bound = 3.0 / (5000f64).sqrt();
        assert!(r[1..].iter().all(|v| v.abs() < bound), "{r:?}");
    }

    #[test]
    fn acf_and_pacf_of_ar1() {
        let ts = simulate_ar(&ar(&[0.8], 1.0), 20_000, 500, 2).unwrap();
        let r = acf(&ts, 5).unwrap();
        for (k, rk) in r.iter().enumerate() {
            assert!((rk - 0.8f64.powi(k as i32)).abs() < 0.05, "lag {k}: {rk}");
        }
        let pc = pacf(&ts, 5).unwrap();
        assert!((pc[1] - 0.8).abs() < 0.03);
        let bound = 3.0 / (20_000f64).sqrt();
        assert!(pc[2..].iter().all(|v| v.abs() < bound), "{pc:?}");
    }

    #[test]
    fn pacf_cutoff_over_seeds() {
        let p = ar(&[0.5, -0.3], 1.0);
        let n = 5000;
        let bound = 3.0 / (n as f64).sqrt();
        let failures = (0..10)
            .filter(|&seed| {
                let ts = simulate_ar(&p, n, 200, 100 + seed).unwrap();
                let pc = pacf(&ts, 8).unwrap();
                pc[3..].iter().any(|v| v.abs() >= bound)
            })
            .count();
        assert!(failures <= 1, "{failures} seeds broke the PACF cutoff");
    }

    #[test]
    fn acf_errors() {
        let ts = TimeSeries::new(vec![1.0, 2.0, 3.0], 1.0, "").unwrap();
        assert!(acf(&ts, 3).is_err());
        let flat = TimeSeries::new(vec![2.0; 5], 1.0, "").unwrap();
        assert!(acf(&flat, 1).is_err());
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let with_header = dir.path().join("a.csv");
        std::fs::write(&with_header, "year,count\n1700,5\n1701,11\n1702,16\n").unwrap();
        let ts = load_csv(&with_header, &ValueColumn::Name("count".into()), 1.0).unwrap();
        assert_eq!(ts.values(), &[5.0, 11.0, 16.0]);
        let ts = load_csv(&with_header, &ValueColumn::Index(1), 1.0).unwrap();
        assert_eq!(ts.len(), 3);

        let single = dir.path().join("one.csv");
        std::fs::write(&single, "3.5\n").unwrap();
        assert_eq!(
            load_csv(&single, &ValueColumn::Index(0), 1.0)
                .unwrap()
                .len(),
            1
        );

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "v\n1\n2\n3\nfoo\n5\n").unwrap();
        match load_csv(&bad, &ValueColumn::Name("v".into()), 1.0) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 5),
            other => panic!("{other:?}"),
        }

        let missing = dir.path().join("missing.csv");
        std::fs::write(&missing, "1,2\n3,\n").unwrap();
        assert!(matches!(
            load_csv(&missing, &ValueColumn::Index(1), 1.0),
            Err(Error::Parse { row: 2, .. })
        ));

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "v\n").unwrap();
        assert!(load_csv(&empty, &ValueColumn::Name("v".into()), 1.0).is_err());
        assert!(matches!(
            load_csv(dir.path().join("nope.csv"), &ValueColumn::Index(0), 1.0),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn standardize_round_trip() {
        let ts = TimeSeries::new(vec![1.0, 3.0, 5.0, 7.0], 1.0, "").unwrap();
        let (z, s) = ts.standardized().unwrap();
        assert!(z.mean().abs() < 1e-15);
        assert!((z.variance() - 1.0).abs() < 1e-12);
        assert_eq!(s.mean, 4.0);
        let theta = ar(&[0.3], 2.0);
        let back = s.restore_params(&theta);
        assert_eq!(back.coefficients, vec![0.3]);
        assert!((back.noise_variance - 2.0 * 5.0).abs() < 1e-12);
    }

    #[test]
    fn series_csv_layout() {
        let ts = TimeSeries::new(vec![1.5, -2.0], 0.5, "").unwrap();
        assert_eq!(ts.to_csv_string(), "index,time,value\n0,0,1.5\n1,0.5,-2\n");
    }
}

//! End-to-end presets: AR(4) data fitted with AR(10), a GP with Laplace
//! covariance fitted with AR(4), and the yearly sunspots series.

use std::path::{Path, PathBuf};
use std::time::Instant;

use arbase::spectrum::{DEFAULT_GRID_SIZE, DEFAULT_PEAK_RATIO};
use arbase::timeseries::Standardization;
use arbase::{
    ar_psd, find_peaks, laplace_true_psd, load_csv, periodogram, posterior_peaks, simulate_ar,
    simulate_gp_laplace, subsample_prefix, ARParams, FrequencyGrid, LaplaceKernelParams,
    ModelTwoHyper, Peak, PeakSet, PosteriorSpectrum, SpectrumCenter, SpectrumEstimate, TimeSeries,
    ValueColumn,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::output::OutDir;
use crate::pipeline::{self, BayesFit, FitConfig, SamplesMeta, SpectrumMeta};

pub const AR4_LEN: usize = 1000;
pub const AR4_ORDER: usize = 10;
pub const GP_LEN: usize = 1000;
pub const GP_ORDER: usize = 4;
/// Frequencies (cycles/sample) holding almost all of the GP's power.
pub const GP_REGION: (f64, f64) = (0.0, 0.05);
pub const SUNSPOTS_ORDER: usize = 9;
pub const SUNSPOTS_FRACTION: f64 = 1.0 / 6.0;

pub const DATA_DIR_ENV: &str = "ARBASE_DATA_DIR";
pub const SUNSPOTS_FILE: &str = "sunspots_yearly.csv";
pub const SUNSPOTS_COLUMN: &str = "SUNACTIVITY";
pub const SUNSPOTS_URL: &str =
    "https://raw.githubusercontent.com/statsmodels/statsmodels/v0.14.6/statsmodels/datasets/sunspots/sunspots.csv";
pub const SUNSPOTS_SHA256: &str =
    "f67889b1d9002cd5227f0e0ef54e35b419cdd85a31279adef6f73fb41e5c0a9b";

/// Resonances `(radius, frequency)` of the AR(4) preset.
pub const AR4_RESONANCES: [(f64, f64); 2] = [(0.9, 0.1), (0.8, 0.3)];

pub fn ar4_truth() -> ARParams {
    ARParams::from_resonances(&AR4_RESONANCES, 1.0).expect("preset resonances are valid")
}

pub fn gp_kernel() -> LaplaceKernelParams {
    LaplaceKernelParams {
        marginal_variance: 1.0,
        lengthscale: 20.0,
        obs_noise_variance: 0.01,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Ar4,
    GpLaplace,
    Sunspots,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ar4 => "ar4",
            ExperimentKind::GpLaplace => "gp-laplace",
            ExperimentKind::Sunspots => "sunspots",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub seed: u64,
    pub n_draws: usize,
    pub n_chains: usize,
    pub grid_size: usize,
    pub level: f64,
    pub cv_folds: usize,
    /// Sunspots file; falls back to `$ARBASE_DATA_DIR/sunspots_yearly.csv`.
    pub input: Option<PathBuf>,
    pub dt: Option<f64>,
}

impl ExperimentOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_draws: arbase::mcmc::DEFAULT_DRAWS,
            n_chains: arbase::mcmc::DEFAULT_CHAINS,
            grid_size: DEFAULT_GRID_SIZE,
            level: arbase::posterior_psd::DEFAULT_LEVEL,
            cv_folds: pipeline::default_folds(),
            input: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
    pub exit_code: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub params: Option<ARParams>,
    pub main_peak: Option<Peak>,
    pub peaks: PeakSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSummary {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BayesSummary {
    pub runtime_seconds: f64,
    pub n_samples: usize,
    pub level: f64,
    pub unstable_fraction: f64,
    pub excluded_evaluations: usize,
    /// Share of grid points in the region where the true PSD lies in the band.
    pub coverage: Option<f64>,
    /// Mean of `ln(upper) − ln(lower)` over the region.
    pub mean_log_band_width: f64,
    pub main_peak_median: Option<Peak>,
    pub main_peak_mean: Option<Peak>,
    pub peaks_median: PeakSet,
    pub posterior_means: Vec<f64>,
    pub credible_intervals: Vec<[f64; 2]>,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub hyper: Option<ModelTwoHyper>,
    pub cv_folds: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub seed: u64,
    pub order: usize,
    pub series_len: usize,
    pub dt: f64,
    pub grid_size: usize,
    /// Region of the coverage and band-width statistics, cycles/sample.
    pub region: [f64; 2],
    pub standardization: Option<Standardization>,
    pub truth: serde_json::Value,
    pub periodogram: Option<PointSummary>,
    pub ase: Option<PointSummary>,
    pub map: Option<PointSummary>,
    pub base_mcmc: Option<BayesSummary>,
    pub base_cf: Option<BayesSummary>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
    pub runtime_seconds: f64,
    pub files: Vec<String>,
}

impl ExperimentSummary {
    /// Warnings from every stage, for `--strict`.
    pub fn all_warnings(&self) -> Vec<String> {
        let mut out = self.warnings.clone();
        for (name, s) in [("base_mcmc", &self.base_mcmc), ("base_cf", &self.base_cf)] {
            if let Some(s) = s {
                out.extend(s.warnings.iter().map(|w| format!("{name}: {w}")));
            }
        }
        out
    }
}

struct Preset {
    /// Series the parametric models are fitted to.
    fit_series: TimeSeries,
    /// Series for the Periodogram (the full record for sunspots).
    periodogram_series: TimeSeries,
    order: usize,
    standardize: bool,
    truth_json: serde_json::Value,
    truth_psd: Option<SpectrumEstimate>,
    region: (f64, f64),
    warnings: Vec<String>,
}

/// Resolves the sunspots file: explicit path, then the data directory.
pub fn sunspots_path(input: Option<&Path>) -> CliResult<PathBuf> {
    if let Some(p) = input {
        return if p.is_file() {
            Ok(p.to_path_buf())
        } else {
            Err(CliError::input(format!(
                "sunspots file {} does not exist",
                p.display()
            )))
        };
    }
    let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    if let Some(dir) = &dir {
        let p = dir.join(SUNSPOTS_FILE);
        if p.is_file() {
            return Ok(p);
        }
    }
    let where_ = match &dir {
        Some(d) => format!("{} (from {DATA_DIR_ENV})", d.display()),
        None => format!("the directory named by {DATA_DIR_ENV} (not set)"),
    };
    Err(CliError::input(format!(
        "sunspots data not found in {where_}.\n\
         Download the yearly series and point {DATA_DIR_ENV} at its directory:\n  \
         mkdir -p \"$HOME/.cache/arbase\"\n  \
         curl -L -o \"$HOME/.cache/arbase/{SUNSPOTS_FILE}\" {SUNSPOTS_URL}\n  \
         export {DATA_DIR_ENV}=\"$HOME/.cache/arbase\"\n\
         Expected sha256: {SUNSPOTS_SHA256}\n\
         Alternatively pass the file with --input."
    )))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn preset(kind: ExperimentKind, opts: &ExperimentOptions) -> CliResult<Preset> {
    match kind {
        ExperimentKind::Ar4 => {
            let truth = ar4_truth();
            let dt = opts.dt.unwrap_or(1.0);
            let x = simulate_ar(
                &truth,
                AR4_LEN,
                arbase::timeseries::default_burn_in(4),
                opts.seed,
            )?;
            let x = TimeSeries::new(x.values().to_vec(), dt, "ar4")?;
            let grid = FrequencyGrid::uniform(opts.grid_size, dt)?;
            Ok(Preset {
                periodogram_series: x.clone(),
                fit_series: x,
                order: AR4_ORDER,
                standardize: false,
                truth_json: serde_json::to_value(&truth)?,
                truth_psd: Some(ar_psd(&truth, &grid)?),
                region: (0.0, 0.5),
                warnings: Vec::new(),
            })
        }
        ExperimentKind::GpLaplace => {
            let kernel = gp_kernel();
            let dt = opts.dt.unwrap_or(1.0);
            let x = simulate_gp_laplace(&kernel, GP_LEN, dt, opts.seed)?;
            let grid = FrequencyGrid::uniform(opts.grid_size, dt)?;
            let truth = laplace_true_psd(&kernel, &grid)?;
            Ok(Preset {
                periodogram_series: x.clone(),
                fit_series: x,
                order: GP_ORDER,
                standardize: false,
                truth_json: serde_json::to_value(kernel)?,
                truth_psd: Some(truth),
                region: GP_REGION,
                warnings: Vec::new(),
            })
        }
        ExperimentKind::Sunspots => {
            let path = sunspots_path(opts.input.as_deref())?;
            let mut warnings = Vec::new();
            let digest = sha256_file(&path)?;
            if digest != SUNSPOTS_SHA256 {
                warnings.push(format!(
                    "{} has sha256 {digest}, expected {SUNSPOTS_SHA256}",
                    path.display()
                ));
            }
            let full = load_csv(
                &path,
                &ValueColumn::Name(SUNSPOTS_COLUMN.into()),
                opts.dt.unwrap_or(1.0),
            )?;
            let prefix = subsample_prefix(&full, SUNSPOTS_FRACTION)?;
            Ok(Preset {
                periodogram_series: full.clone(),
                fit_series: prefix,
                order: SUNSPOTS_ORDER,
                standardize: true,
                truth_json: serde_json::json!({
                    "source": path.display().to_string(),
                    "sha256": digest,
                    "full_len": full.len(),
                    "reference_period": 11.0,
                }),
                truth_psd: None,
                region: (0.0, 0.5),
                warnings,
            })
        }
    }
}

fn in_region(f: f64, region: (f64, f64)) -> bool {
    f >= region.0 && f <= region.1
}

pub fn band_coverage(ps: &PosteriorSpectrum, truth: &[f64], region: (f64, f64)) -> f64 {
    let (mut inside, mut total) = (0usize, 0usize);
    for (i, &f) in ps.grid().freqs().iter().enumerate() {
        if in_region(f, region) {
            total += 1;
            if truth[i] >= ps.lower()[i] && truth[i] <= ps.upper()[i] {
                inside += 1;
            }
        }
    }
    inside as f64 / total as f64
}

pub fn mean_log_band_width(ps: &PosteriorSpectrum, region: (f64, f64)) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, &f) in ps.grid().freqs().iter().enumerate() {
        if in_region(f, region) {
            sum += ps.upper()[i].ln() - ps.lower()[i].ln();
            n += 1;
        }
    }
    sum / n as f64
}

fn point_summary(params: Option<ARParams>, est: &SpectrumEstimate) -> PointSummary {
    let peaks = find_peaks(est, DEFAULT_PEAK_RATIO);
    PointSummary {
        params,
        main_peak: peaks.main_peak().cloned(),
        peaks,
    }
}

fn bayes_summary(
    fit: &BayesFit,
    truth: Option<&SpectrumEstimate>,
    region: (f64, f64),
) -> BayesSummary {
    let ps = &fit.spectrum;
    let peaks_median = posterior_peaks(ps, SpectrumCenter::Median, DEFAULT_PEAK_RATIO);
    let peaks_mean = posterior_peaks(ps, SpectrumCenter::Mean, DEFAULT_PEAK_RATIO);
    let s = &fit.samples;
    BayesSummary {
        runtime_seconds: fit.runtime_seconds,
        n_samples: s.len(),
        level: ps.level,
        unstable_fraction: ps.unstable_fraction,
        excluded_evaluations: ps.total_excluded(),
        coverage: truth.map(|t| band_coverage(ps, &t.psd, region)),
        mean_log_band_width: mean_log_band_width(ps, region),
        main_peak_median: peaks_median.main_peak().cloned(),
        main_peak_mean: peaks_mean.main_peak().cloned(),
        peaks_median,
        posterior_means: s.column_means(),
        credible_intervals: (0..=s.order)
            .map(|j| {
                let (lo, hi) = s.credible_interval(j, ps.level);
                [lo, hi]
            })
            .collect(),
        diagnostics: fit.diagnostics.as_ref().map(|d| DiagnosticsSummary {
            rhat: d.rhat.clone(),
            ess: d.ess.clone(),
            max_rhat: d.max_rhat(),
            min_ess: d.min_ess(),
            acceptance_rate: s.acceptance_rate,
        }),
        hyper: fit.hyper.clone(),
        cv_folds: fit.cv.as_ref().map(|c| c.n_folds),
        warnings: fit.warnings.clone(),
    }
}

fn record<T>(failures: &mut Vec<Failure>, stage: &str, r: CliResult<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push(Failure {
                stage: stage.to_string(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            });
            None
        }
    }
}

/// Writes the posterior spectrum, its sidecar, samples and sample sidecar.
pub fn write_bayes_outputs(
    out: &mut OutDir,
    name: &str,
    fit: &BayesFit,
    std: Option<Standardization>,
    notes: &[String],
) -> CliResult<()> {
    let mut notes = notes.to_vec();
    notes.push(format!("model: {name}"));
    out.write(
        &format!("spectra/{name}.csv"),
        &fit.spectrum.to_csv_string(&notes),
    )?;
    out.write_json(
        &format!("spectra/{name}.json"),
        &SpectrumMeta::of(&fit.spectrum),
    )?;
    out.write(&format!("samples/{name}.csv"), &fit.samples.to_csv_string())?;
    out.write_json(
        &format!("samples/{name}.json"),
        &SamplesMeta {
            model: name,
            order: fit.samples.order,
            seed: fit.samples.seed,
            n_chains: fit.samples.n_chains,
            n_draws: fit.samples.draws_per_chain(),
            acceptance_rate: fit.samples.acceptance_rate,
            standardization: std,
            diagnostics: fit.diagnostics.as_ref(),
            hyper: fit.hyper.as_ref(),
            warnings: &fit.warnings,
        },
    )?;
    if let Some(cv) = &fit.cv {
        out.write(
            &format!("samples/{name}_cv_scores.csv"),
            &cv.to_csv_string(),
        )?;
        out.write_json(&format!("samples/{name}_hyper.json"), &cv.best)?;
    }
    Ok(())
}

/// Runs a preset into `outdir` (`data/`, `spectra/`, `samples/`,
/// `summary.json`). Stage failures are collected in the summary instead of
/// aborting; only a failure to obtain the data is returned as an error.
pub fn run_experiment(
    kind: ExperimentKind,
    opts: &ExperimentOptions,
    outdir: &Path,
) -> CliResult<ExperimentSummary> {
    let preset = preset(kind, opts)?;
    let mut out = OutDir::create(outdir)?;
    let ts = &preset.fit_series;
    let dt = ts.dt();
    let grid = FrequencyGrid::uniform(opts.grid_size, dt)?;
    let mut cfg = FitConfig::new(preset.order, grid, opts.seed);
    cfg.level = opts.level;
    cfg.n_draws = opts.n_draws;
    cfg.n_chains = opts.n_chains;
    cfg.standardize = preset.standardize;
    cfg.cv_folds = Some(opts.cv_folds);
    let standardization = pipeline::standardization_of(ts, preset.standardize)?;
    let notes = vec![
        format!("experiment: {}", kind.name()),
        format!("seed: {}", opts.seed),
    ];

    out.write("data/series.csv", &ts.to_csv_string())?;
    if preset.periodogram_series.len() != ts.len() {
        out.write(
            "data/full_series.csv",
            &preset.periodogram_series.to_csv_string(),
        )?;
    }
    out.write_json("data/truth.json", &preset.truth_json)?;

    let mut failures = Vec::new();
    let started = Instant::now();

    let pgram = record(
        &mut failures,
        "periodogram",
        periodogram(&preset.periodogram_series, true).map_err(CliError::from),
    );
    if let Some(p) = &pgram {
        out.write(
            "spectra/periodogram.csv",
            &p.to_csv_string(&[notes.clone(), vec!["model: periodogram".into()]].concat()),
        )?;
    }

    let ase = record(&mut failures, "ase", pipeline::run_ase(ts, &cfg));
    if let Some((_, est)) = &ase {
        out.write(
            "spectra/ase.csv",
            &est.to_csv_string(&[notes.clone(), vec!["model: ase".into()]].concat()),
        )?;
    }

    if let Some(truth) = &preset.truth_psd {
        out.write(
            "spectra/true.csv",
            &truth.to_csv_string(&[notes.clone(), vec!["model: true".into()]].concat()),
        )?;
    }

    let cf = record(&mut failures, "base_cf", pipeline::run_model_two(ts, &cfg));
    let mut map_summary = None;
    if let Some(fit) = &cf {
        write_bayes_outputs(&mut out, "base_cf", fit, standardization, &notes)?;
        if let Some(theta) = &fit.map {
            if let Some(est) = record(
                &mut failures,
                "map",
                ar_psd(theta, &cfg.grid).map_err(CliError::from),
            ) {
                out.write(
                    "spectra/map.csv",
                    &est.to_csv_string(&[notes.clone(), vec!["model: map".into()]].concat()),
                )?;
                map_summary = Some(point_summary(Some(theta.clone()), &est));
            }
        }
    }

    let mcmc = record(
        &mut failures,
        "base_mcmc",
        pipeline::run_model_one(ts, &cfg),
    );
    if let Some(fit) = &mcmc {
        write_bayes_outputs(&mut out, "base_mcmc", fit, standardization, &notes)?;
    }

    let truth = preset.truth_psd.as_ref();
    let mut summary = ExperimentSummary {
        experiment: kind.name().to_string(),
        seed: opts.seed,
        order: preset.order,
        series_len: ts.len(),
        dt,
        grid_size: opts.grid_size,
        region: [preset.region.0, preset.region.1],
        standardization,
        truth: preset.truth_json.clone(),
        periodogram: pgram.as_ref().map(|p| point_summary(None, p)),
        ase: ase
            .as_ref()
            .map(|(theta, est)| point_summary(Some(theta.clone()), est)),
        map: map_summary,
        base_mcmc: mcmc
            .as_ref()
            .map(|f| bayes_summary(f, truth, preset.region)),
        base_cf: cf.as_ref().map(|f| bayes_summary(f, truth, preset.region)),
        failures,
        warnings: preset.warnings,
        runtime_seconds: 0.0,
        files: Vec::new(),
    };
    summary.runtime_seconds = started.elapsed().as_secs_f64();
    let mut files = out.written().to_vec();
    files.push("summary.json".into());
    summary.files = files;
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

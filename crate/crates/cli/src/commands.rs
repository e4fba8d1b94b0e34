use std::fmt::Write as _;
use std::hash::{BuildHasher, Hasher};
use std::path::Path;

use arbase::spectrum::read_spectrum_csv;
use arbase::timeseries::default_burn_in;
use arbase::{
    acf, find_peaks, load_csv, pacf, periodogram, simulate_ar, simulate_gp_laplace, ARParams,
    FrequencyGrid, LaplaceKernelParams, ModelOneHyper, ModelTwoHyper, NoisePrior, TimeSeries,
    ValueColumn,
};
use serde::Serialize;

use crate::cli::*;
use crate::error::{CliError, CliResult};
use crate::experiments::{self, ar4_truth, ExperimentKind, ExperimentOptions};
use crate::output::OutDir;
use crate::pipeline::{self, FitConfig};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Fit(a) => fit(&a),
        Command::Periodogram(a) => cmd_periodogram(&a),
        Command::Peaks(a) => peaks(&a),
        Command::Acf(a) => cmd_acf(&a),
        Command::Experiment(a) => experiment(&a),
    }
}

/// Seed for runs without `--seed`; recorded in the outputs.
fn entropy_seed() -> u64 {
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0),
    );
    h.finish()
}

fn emit(stdout: bool, text: &str) {
    if stdout {
        print!("{text}");
    }
}

/// `value` when the header has it, otherwise the last column.
fn default_column(path: &Path) -> CliResult<ValueColumn> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    let cells: Vec<&str> = first
        .split(',')
        .map(|c| c.trim().trim_matches('"'))
        .collect();
    if cells.contains(&"value") {
        Ok(ValueColumn::Name("value".into()))
    } else {
        Ok(ValueColumn::Index(cells.len().saturating_sub(1)))
    }
}

fn load_input(a: &InputArgs) -> CliResult<TimeSeries> {
    let column = match &a.column {
        Some(c) => c.parse().expect("infallible"),
        None => default_column(&a.input)?,
    };
    Ok(load_csv(&a.input, &column, a.dt)?)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Truth {
    Ar {
        params: ARParams,
        seed: u64,
        burn_in: usize,
        dt: f64,
    },
    Gp {
        kernel: LaplaceKernelParams,
        seed: u64,
        dt: f64,
    },
}

fn generate(a: &GenerateArgs) -> CliResult<()> {
    let seed = a.seed.unwrap_or_else(entropy_seed);
    let (ts, truth) = match a.kind {
        GenerateKind::Ar => {
            let params = match (&a.coefficients, a.order) {
                (Some(c), _) => ARParams::new(c.clone(), a.noise_variance)?,
                (None, Some(0)) => ARParams::new(vec![], a.noise_variance)?,
                (None, None) | (None, Some(4)) => ARParams {
                    noise_variance: a.noise_variance,
                    ..ar4_truth()
                },
                (None, Some(p)) => {
                    return Err(CliError::input(format!(
                        "order {p} needs explicit --coefficients (only 0 and the order-4 preset are built in)"
                    )))
                }
            };
            params.validate()?;
            let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(params.order()));
            let x = simulate_ar(&params, a.len, burn_in, seed)?;
            let x = TimeSeries::new(x.values().to_vec(), a.dt, x.label())?;
            (
                x,
                Truth::Ar {
                    params,
                    seed,
                    burn_in,
                    dt: a.dt,
                },
            )
        }
        GenerateKind::Gp => {
            let kernel = LaplaceKernelParams {
                marginal_variance: a.marginal_variance,
                lengthscale: a.lengthscale,
                obs_noise_variance: a.obs_noise_variance,
            };
            let x = simulate_gp_laplace(&kernel, a.len, a.dt, seed)?;
            (
                x,
                Truth::Gp {
                    kernel,
                    seed,
                    dt: a.dt,
                },
            )
        }
    };
    let mut out = OutDir::create(&a.outdir)?;
    let csv = ts.to_csv_string();
    out.write("series.csv", &csv)?;
    out.write_json("truth.json", &truth)?;
    emit(a.stdout, &csv);
    Ok(())
}

fn fit(a: &FitArgs) -> CliResult<()> {
    let ts = load_input(&a.input)?;
    let seed = a.seed.unwrap_or_else(entropy_seed);
    let grid = FrequencyGrid::uniform(a.grid_size, ts.dt())?;
    let mut cfg = FitConfig::new(a.order, grid, seed);
    cfg.level = a.level;
    cfg.n_draws = a.draws;
    cfg.n_chains = a.chains;
    cfg.standardize = a.standardize;
    cfg.model_one = ModelOneHyper {
        coeff_variance: a.coeff_variance,
        noise_prior_scale: a.noise_scale,
    };
    cfg.noise_prior = match a.noise_prior {
        NoisePriorArg::HalfNormal => NoisePrior::HalfNormal,
        NoisePriorArg::Exponential => NoisePrior::Exponential,
    };
    cfg.model_two = Some(ModelTwoHyper::constant(
        a.order, a.mu0, a.lambda, a.alpha, a.beta,
    ));
    cfg.cv_folds = a.cv.then_some(a.folds);
    if a.cv && a.model != ModelKind::BaseCf {
        return Err(CliError::input("--cv applies to --model base-cf only"));
    }

    let mut out = OutDir::create(&a.outdir)?;
    let std = pipeline::standardization_of(&ts, a.standardize)?;
    let notes = vec![
        format!("input: {}", a.input.input.display()),
        format!("order: {}", a.order),
    ];
    match a.model {
        ModelKind::Ase => {
            let (theta, est) = pipeline::run_ase(&ts, &cfg)?;
            let mut n = notes.clone();
            n.push("model: ase".into());
            let csv = est.to_csv_string(&n);
            out.write("spectra/ase.csv", &csv)?;
            out.write_json("spectra/ase_params.json", &theta)?;
            emit(a.stdout, &csv);
            Ok(())
        }
        ModelKind::BaseMcmc | ModelKind::BaseCf => {
            let (name, fit) = if a.model == ModelKind::BaseMcmc {
                ("base_mcmc", pipeline::run_model_one(&ts, &cfg)?)
            } else {
                ("base_cf", pipeline::run_model_two(&ts, &cfg)?)
            };
            let mut notes = notes;
            notes.push(format!("seed: {seed}"));
            experiments::write_bayes_outputs(&mut out, name, &fit, std, &notes)?;
            if let Some(theta) = &fit.map {
                let est = arbase::ar_psd(theta, &cfg.grid)?;
                out.write(
                    "spectra/map.csv",
                    &est.to_csv_string(&[notes.clone(), vec!["model: map".into()]].concat()),
                )?;
                out.write_json("spectra/map_params.json", theta)?;
            }
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            emit(a.stdout, &fit.spectrum.to_csv_string(&notes));
            if a.strict && !fit.warnings.is_empty() {
                return Err(CliError::Diagnostics(fit.warnings.join("; ")));
            }
            Ok(())
        }
    }
}

fn cmd_periodogram(a: &PeriodogramArgs) -> CliResult<()> {
    let ts = load_input(&a.input)?;
    let est = periodogram(&ts, !a.no_demean)?;
    let csv = est.to_csv_string(&[
        format!("input: {}", a.input.input.display()),
        "model: periodogram".into(),
        format!("demeaned: {}", !a.no_demean),
    ]);
    OutDir::create(&a.outdir)?.write("spectra/periodogram.csv", &csv)?;
    emit(a.stdout, &csv);
    Ok(())
}

#[derive(Serialize)]
struct PeaksReport<'a> {
    input: String,
    center: &'a str,
    threshold: f64,
    main_peak: Option<&'a arbase::Peak>,
    #[serde(flatten)]
    peaks: &'a arbase::PeakSet,
}

fn peaks(a: &PeaksArgs) -> CliResult<()> {
    if !(a.threshold >= 0.0 && a.threshold <= 1.0) {
        return Err(CliError::input("--threshold must lie in [0, 1]"));
    }
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let (mut est, median) = read_spectrum_csv(&text)?;
    let center = match (a.center, median) {
        (Some(CenterArg::Mean), _) => "mean",
        (Some(CenterArg::Median), None) => {
            return Err(CliError::input(
                "--center median needs a spectrum with a median column",
            ))
        }
        (_, Some(m)) if a.center != Some(CenterArg::Mean) => {
            est.psd = m;
            "median"
        }
        _ => "psd",
    };
    let set = find_peaks(&est, a.threshold);
    let report = PeaksReport {
        input: a.input.display().to_string(),
        center,
        threshold: a.threshold,
        main_peak: set.main_peak(),
        peaks: &set,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    OutDir::create(&a.outdir)?.write("peaks.json", &json)?;
    emit(a.stdout, &json);
    Ok(())
}

fn cmd_acf(a: &AcfArgs) -> CliResult<()> {
    let ts = load_input(&a.input)?;
    let r = acf(&ts, a.max_lag)?;
    let pr = pacf(&ts, a.max_lag)?;
    let mut csv = String::from("lag,acf,pacf\n");
    for (k, v) in r.iter().enumerate() {
        let _ = writeln!(csv, "{k},{v},{}", pr[k]);
    }
    OutDir::create(&a.outdir)?.write("acf.csv", &csv)?;
    emit(a.stdout, &csv);
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> CliResult<()> {
    let kind = match a.name {
        ExperimentName::Ar4 => ExperimentKind::Ar4,
        ExperimentName::GpLaplace => ExperimentKind::GpLaplace,
        ExperimentName::Sunspots => ExperimentKind::Sunspots,
    };
    let opts = ExperimentOptions {
        seed: a.seed,
        n_draws: a.draws,
        n_chains: a.chains,
        grid_size: a.grid_size,
        level: a.level,
        cv_folds: a.folds,
        input: a.input.clone(),
        dt: a.dt,
    };
    let summary = experiments::run_experiment(kind, &opts, &a.outdir)?;
    for w in summary.all_warnings() {
        eprintln!("warning: {w}");
    }
    if a.stdout {
        print!("{}", serde_json::to_string_pretty(&summary)?);
        println!();
    }
    if let Some(f) = summary.failures.iter().max_by_key(|f| f.exit_code) {
        for f in &summary.failures {
            eprintln!("stage {} failed: {}", f.stage, f.message);
        }
        return Err(match f.exit_code {
            2 => CliError::Numerical(format!("stage {} failed; see summary.json", f.stage)),
            _ => CliError::Input(format!("stage {} failed; see summary.json", f.stage)),
        });
    }
    if a.strict {
        let w = summary.all_warnings();
        if !w.is_empty() {
            return Err(CliError::Diagnostics(w.join("; ")));
        }
    }
    Ok(())
}

//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line per criterion and fails when a hard criterion fails.
//! Criterion 10 is soft: it is reported but never fails the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use arbase::mcmc::{mcse_mean, run_chains, SamplerSettings};
use arbase::spectrum::periodogram_mean_square;
use arbase::timeseries::default_burn_in;
use arbase::{
    fit_ase, map_estimate, nig_posterior, periodogram, sample_posterior_mcmc, simulate_ar,
    ARParams, McmcOptions, ModelOneHyper, ModelTwoHyper, TimeSeries,
};
use arbase_cli::experiments::{
    ar4_truth, run_experiment, ExperimentKind, ExperimentOptions, AR4_LEN, AR4_ORDER,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn hand_oracle() -> Outcome {
    let ts = TimeSeries::new(vec![1.0, 1.0], 1.0, "").unwrap();
    let post = nig_posterior(&ts, 1, &ModelTwoHyper::constant(1, 0.0, 1.0, 1.0, 1.0)).unwrap();
    let errs = [
        (post.precision[(0, 0)] - 2.0).abs(),
        (post.mu[0] - 0.5).abs(),
        (post.alpha_bar - 1.5).abs(),
        (post.beta_bar - 1.25).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!(
            "precision={} mu={} alpha_bar={} beta_bar={} (max abs error {worst:.1e})",
            post.precision[(0, 0)],
            post.mu[0],
            post.alpha_bar,
            post.beta_bar
        ),
    )
}

/// Mean and variance of a₁ under likelihood × NIG prior, by trapezoid
/// quadrature over (a₁, log σ²) directly from the raw samples.
fn quadrature(v: &[f64], mu0: f64, lambda: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let n = (v.len() - 1) as f64;
    let (na, ns) = (2001, 2001);
    let (a_lo, a_hi, l_lo, l_hi) = (-1.5, 2.5, -6.0, 4.0);
    let at = |i: usize, lo: f64, hi: f64, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut logs = vec![0.0; na * ns];
    let mut peak = f64::NEG_INFINITY;
    for i in 0..na {
        let a = at(i, a_lo, a_hi, na);
        let rss: f64 = v.windows(2).map(|w| (w[1] - a * w[0]).powi(2)).sum();
        for j in 0..ns {
            let l = at(j, l_lo, l_hi, ns);
            let s2 = l.exp();
            // likelihood, N(a | μ₀, σ²/λ), InvGamma(σ² | α, β), Jacobian σ²
            let lp = -(n / 2.0) * l
                - rss / (2.0 * s2)
                - 0.5 * l
                - lambda * (a - mu0).powi(2) / (2.0 * s2)
                - (alpha + 1.0) * l
                - beta / s2
                + l;
            logs[i * ns + j] = lp;
            peak = peak.max(lp);
        }
    }
    let w = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in 0..na {
        let a = at(i, a_lo, a_hi, na);
        let m: f64 = (0..ns)
            .map(|j| w(j, ns) * (logs[i * ns + j] - peak).exp())
            .sum::<f64>()
            * w(i, na);
        z += m;
        m1 += a * m;
        m2 += a * a * m;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

fn quadrature_equivalence() -> Outcome {
    let x = simulate_ar(&ARParams::new(vec![0.7], 1.0).unwrap(), 50, 100, 2024).unwrap();
    let hyper = ModelTwoHyper::constant(1, 0.0, 1.0, 1.0, 1.0);
    let post = nig_posterior(&x, 1, &hyper).unwrap();
    let mean = post.mu[0];
    let var = post.coefficient_covariance().unwrap()[(0, 0)];
    let (qm, qv) = quadrature(x.values(), 0.0, 1.0, 1.0, 1.0);
    let rm = ((mean - qm) / qm).abs();
    let rv = ((var - qv) / qv).abs();
    outcome(
        rm < 1e-3 && rv < 1e-3,
        format!(
            "mean {mean:.6} vs {qm:.6} (rel {rm:.1e}); var {var:.6e} vs {qv:.6e} (rel {rv:.1e})"
        ),
    )
}

fn sampler_correctness() -> Outcome {
    let x = simulate_ar(&ARParams::new(vec![0.5, -0.3], 1.0).unwrap(), 200, 100, 7).unwrap();
    let post = nig_posterior(&x, 2, &ModelTwoHyper::constant(2, 0.0, 1.0, 2.0, 1.0)).unwrap();
    let cov = post.coefficient_covariance().unwrap();
    let s2_mean = post.noise_variance_mean().unwrap();
    // same parametrization as Model I: (a, log σ²) with the log-Jacobian
    let target = |z: &[f64]| post.log_density(&z[..2], z[2].exp()) + z[2];
    let init = vec![post.mu[0], post.mu[1], s2_mean.ln()];
    let scales = [
        cov[(0, 0)].sqrt(),
        cov[(1, 1)].sqrt(),
        (2.0 / post.n_rows as f64).sqrt(),
    ];
    let inits = vec![init; 4];
    let settings = SamplerSettings::new(20_000, 5_000);
    let chains = run_chains(target, &inits, &scales, &settings, 99).unwrap();

    let mut ok = true;
    let mut parts = Vec::new();
    for (j, want) in [(0, post.mu[0]), (1, post.mu[1])] {
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
        let all = cols.concat();
        let est = all.iter().sum::<f64>() / all.len() as f64;
        let se = mcse_mean(&cols);
        ok &= (est - want).abs() < 3.0 * se;
        parts.push(format!(
            "a{} {est:.4} vs {want:.4} (|z|={:.2})",
            j + 1,
            (est - want).abs() / se
        ));
    }
    let cols: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| c.column(2).into_iter().map(f64::exp).collect())
        .collect();
    let all = cols.concat();
    let est = all.iter().sum::<f64>() / all.len() as f64;
    let se = mcse_mean(&cols);
    ok &= (est - s2_mean).abs() < 3.0 * se;
    parts.push(format!(
        "sigma2 {est:.4} vs {s2_mean:.4} (|z|={:.2})",
        (est - s2_mean).abs() / se
    ));
    outcome(ok, parts.join("; "))
}

fn misspecified_order() -> Outcome {
    let truth = ar4_truth();
    let mut good_seeds = 0;
    let mut per_seed = Vec::new();
    for seed in 1..=10u64 {
        let x = simulate_ar(&truth, AR4_LEN, default_burn_in(4), seed).unwrap();
        let s = sample_posterior_mcmc(
            &x,
            AR4_ORDER,
            &ModelOneHyper::default(),
            &McmcOptions::new(seed),
        )
        .unwrap();
        let misses: Vec<usize> = (0..AR4_ORDER)
            .filter(|&j| {
                let (lo, hi) = s.credible_interval(j, 0.95);
                let want = truth.coefficients.get(j).copied().unwrap_or(0.0);
                !(lo <= want && want <= hi)
            })
            .map(|j| j + 1)
            .collect();
        if misses.is_empty() {
            good_seeds += 1;
            per_seed.push(format!("{seed}:ok"));
        } else {
            per_seed.push(format!("{seed}:miss a{misses:?}"));
        }
    }
    outcome(
        good_seeds >= 9,
        format!(
            "{good_seeds}/10 seeds with all intervals covering [{}]",
            per_seed.join(" ")
        ),
    )
}

fn experiment(kind: ExperimentKind, seed: u64, root: &Path, input: Option<PathBuf>) -> Value {
    let mut opts = ExperimentOptions::new(seed);
    opts.input = input;
    let dir = root.join(kind.name());
    let summary = run_experiment(kind, &opts, &dir).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn coverage_criterion(summary: &Value, threshold: f64) -> Outcome {
    let c1 = summary["base_mcmc"]["coverage"].as_f64().unwrap();
    let c2 = summary["base_cf"]["coverage"].as_f64().unwrap();
    outcome(
        c1 >= threshold && c2 >= threshold,
        format!(
            "Model I {:.1}%, Model II {:.1}% (need >= {:.0}%)",
            100.0 * c1,
            100.0 * c2,
            100.0 * threshold
        ),
    )
}

fn peak_freq(v: &Value) -> Option<f64> {
    v["frequency"].as_f64()
}

fn sunspots(summary: &Value) -> Outcome {
    let m1 = peak_freq(&summary["base_mcmc"]["main_peak_median"]);
    let m2 = peak_freq(&summary["base_cf"]["main_peak_median"]);
    let m1_mean = peak_freq(&summary["base_mcmc"]["main_peak_mean"]);
    let pg = peak_freq(&summary["periodogram"]["main_peak"]);
    let full_len = summary["truth"]["full_len"].as_f64().unwrap();
    let bin = 1.0 / full_len;
    let in_range = |f: Option<f64>, lo: f64, hi: f64| f.is_some_and(|f| (lo..=hi).contains(&f));
    let ok_m1 = in_range(m1, 0.08, 0.10);
    let ok_m2 = in_range(m2, 0.07, 0.11);
    let ok_pg = pg.is_some_and(|f| (f - 1.0 / 11.0).abs() <= bin + 1e-12);
    outcome(
        ok_m1 && ok_m2 && ok_pg,
        format!(
            "Model I median-PSD peak {m1:?} (mean-PSD peak {m1_mean:?}), Model II {m2:?}, periodogram {pg:?} vs 1/11 = {:.5} ± {bin:.5}",
            1.0 / 11.0
        ),
    )
}

fn ridge_limit() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (1usize..6, prop::collection::vec(-10.0f64..10.0, 30..200));
    let worst = std::cell::Cell::new(0.0_f64);
    let result = runner.run(&strategy, |(p, v)| {
        let ts = TimeSeries::new(v, 1.0, "").unwrap();
        let ols = fit_ase(&ts, p).unwrap();
        let ridge =
            map_estimate(&ts, p, &ModelTwoHyper::constant(p, 0.0, 1e-10, 1.0, 1.0)).unwrap();
        for (a, b) in ridge.coefficients.iter().zip(&ols.coefficients) {
            worst.set(worst.get().max((a - b).abs()));
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        Ok(())
    });
    let worst = worst.get();
    match result {
        Ok(()) => outcome(
            true,
            format!("100 random series; max |a_M − a_ASE| = {worst:.1e}"),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn parseval() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = prop::collection::vec(-100.0f64..100.0, 2..600);
    let result = runner.run(&strategy, |v| {
        let ms = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let ts = TimeSeries::new(v.clone(), 1.0, "").unwrap();
        let rebuilt = periodogram_mean_square(&periodogram(&ts, false).unwrap(), v.len());
        prop_assert!((rebuilt - ms).abs() <= 1e-10 * ms, "{rebuilt} vs {ms}");
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "100 random series within 1e-10 relative"),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn band_width_comparison(summary: &Value) -> Outcome {
    let w1 = summary["base_mcmc"]["mean_log_band_width"]
        .as_f64()
        .unwrap();
    let w2 = summary["base_cf"]["mean_log_band_width"].as_f64().unwrap();
    outcome(
        w2 <= 1.1 * w1,
        format!(
            "mean log band width Model II {w2:.4} vs Model I {w1:.4} (ratio {:.3}, need <= 1.1)",
            w2 / w1
        ),
    )
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/sunspots_yearly.csv")
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture; they do not apply here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let root = tempfile::tempdir().unwrap();
    let mut hard_failures = 0;
    let mut report = |id: &str, soft: bool, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let status = match (o.passed, soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "SOFT-FAIL",
        };
        println!(
            "criterion {id:>2} {status:<9} [{:>6.1}s] {}",
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed && !soft {
            hard_failures += 1;
        }
    };

    report("1", false, &mut hand_oracle);
    report("2", false, &mut quadrature_equivalence);
    report("3", false, &mut sampler_correctness);
    report("4", false, &mut misspecified_order);
    let ar4 = experiment(ExperimentKind::Ar4, 1, root.path(), None);
    report("5", false, &mut || coverage_criterion(&ar4, 0.90));
    let gp = experiment(ExperimentKind::GpLaplace, 1, root.path(), None);
    report("6", false, &mut || coverage_criterion(&gp, 0.85));
    let sun = experiment(ExperimentKind::Sunspots, 1, root.path(), Some(fixture()));
    report("7", false, &mut || sunspots(&sun));
    report("8", false, &mut ridge_limit);
    report("9", false, &mut parseval);
    report("10", true, &mut || band_width_comparison(&ar4));

    if hard_failures > 0 {
        eprintln!("{hard_failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

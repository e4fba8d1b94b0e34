use std::hint::black_box;

use arbase::{
    ar_psd, grid_search_cv, nig_posterior, periodogram, psd_posterior, sample_nig,
    sample_posterior_mcmc, simulate_ar, ARParams, FrequencyGrid, HyperGrid, McmcOptions,
    ModelOneHyper, ModelTwoHyper,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn ar4() -> ARParams {
    ARParams::from_resonances(&[(0.9, 0.1), (0.8, 0.3)], 1.0).unwrap()
}

fn spectra(c: &mut Criterion) {
    let theta = ar4();
    let mut g = c.benchmark_group("ar_psd");
    for n in [256, 4096] {
        let grid = FrequencyGrid::uniform(n, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| ar_psd(black_box(&theta), grid))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("periodogram");
    for n in [1000, 16384] {
        let x = simulate_ar(&theta, n, 200, 1).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| periodogram(black_box(x), true))
        });
    }
    g.finish();
}

fn conjugate(c: &mut Criterion) {
    let x = simulate_ar(&ar4(), 1000, 200, 2).unwrap();
    let hyper = ModelTwoHyper::constant(10, 0.0, 1.0, 1.0, 1.0);
    c.bench_function("nig_posterior p=10 T=1000", |b| {
        b.iter(|| nig_posterior(black_box(&x), 10, &hyper))
    });
    let post = nig_posterior(&x, 10, &hyper).unwrap();
    c.bench_function("sample_nig 4000", |b| {
        b.iter(|| sample_nig(black_box(&post), 4000, 3))
    });

    let mut g = c.benchmark_group("grid_search_cv");
    g.sample_size(10);
    g.bench_function("default grid p=10 T=1000", |b| {
        b.iter(|| grid_search_cv(black_box(&x), 10, &HyperGrid::default(), 5))
    });
    g.finish();
}

fn posterior(c: &mut Criterion) {
    let x = simulate_ar(&ar4(), 1000, 200, 4).unwrap();
    let post = nig_posterior(&x, 10, &ModelTwoHyper::constant(10, 0.0, 1.0, 1.0, 1.0)).unwrap();
    let samples = sample_nig(&post, 4000, 5).unwrap();
    let grid = FrequencyGrid::uniform(512, 1.0).unwrap();
    let mut g = c.benchmark_group("psd_posterior");
    g.sample_size(20);
    g.bench_function("4000 draws x 512 freqs", |b| {
        b.iter(|| psd_posterior(black_box(&samples), &grid, 0.95))
    });
    g.finish();

    let mut g = c.benchmark_group("mcmc");
    g.sample_size(10);
    let mut opts = McmcOptions::new(6);
    opts.n_draws = 500;
    opts.n_chains = 2;
    g.bench_function("model one p=4 T=1000 2x500", |b| {
        b.iter(|| sample_posterior_mcmc(black_box(&x), 4, &ModelOneHyper::default(), &opts))
    });
    g.finish();
}

criterion_group!(benches, spectra, conjugate, posterior);
criterion_main!(benches);

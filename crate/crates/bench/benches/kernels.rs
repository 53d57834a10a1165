use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lsa_gauss::covariance::{sigma_alpha_limit, solve_lyapunov};
use lsa_gauss::distance::{projected_ks, sample_gaussian};
use lsa_gauss::model::presets;
use lsa_gauss::rng::{stream, Purpose};
use lsa_gauss::trajectory::run_sgd;
use lsa_gauss::{make_instance, StepConfig};

fn sgd(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_sgd");
    for d in [1usize, 5, 20] {
        let inst = presets::rademacher(d);
        let cfg = StepConfig::unit_offset(&inst, 0.01, 10_000);
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            let mut rng = stream(1, 0, 0, Purpose::Trajectory);
            b.iter(|| black_box(run_sgd(&inst, &cfg, &mut rng).unwrap()))
        });
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("covariance");
    for d in [2usize, 10, 20] {
        let mut rng = stream(2, d, 0, Purpose::Auxiliary);
        let inst = make_instance(presets::anisotropic_spec(d, &mut rng, presets::rademacher_noise(1.0))).unwrap();
        let m = inst.moments.clone();
        let alpha = 0.5 * inst.max_step();
        g.bench_with_input(BenchmarkId::new("sigma_alpha_limit", d), &d, |b, _| {
            b.iter(|| black_box(sigma_alpha_limit(&m, alpha).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("solve_lyapunov", d), &d, |b, _| {
            b.iter(|| black_box(solve_lyapunov(&m.phi, &m.sigma_eps).unwrap()))
        });
    }
    g.finish();
}

fn distance(c: &mut Criterion) {
    let mut g = c.benchmark_group("projected_ks");
    g.sample_size(20);
    for d in [2usize, 5] {
        let sigma = lsa_gauss::Mat::identity(d, d);
        let z = sample_gaussian(&sigma, 20_000, &mut stream(3, d, 0, Purpose::Auxiliary)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            let mut rng = stream(3, d, 0, Purpose::Directions);
            b.iter(|| black_box(projected_ks(&z, &sigma, 64, 0.01, &mut rng).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, sgd, solvers, distance);
criterion_main!(benches);

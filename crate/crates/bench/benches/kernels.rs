use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rfpde::assembly::{self, Model};
use rfpde::features::{eval_features, sample_features};
use rfpde::problems::{builtin_advection_diffusion, builtin_nonlinear_elliptic};
use rfpde::solvers::{self, solve_least_squares};
use rfpde::{FeatureDistribution, SolverConfig, SolverMethod};

fn features(c: &mut Criterion) {
    let fs = sample_features(&FeatureDistribution::gaussian(2, 100.0).unwrap(), 1000, 0).unwrap();
    c.bench_function("eval_features N=1000", |b| b.iter(|| eval_features(&fs, black_box(&[0.3, 0.7])).unwrap()));
}

fn jacobian(c: &mut Criterion) {
    let p = builtin_nonlinear_elliptic();
    let fs = sample_features(&FeatureDistribution::gaussian(2, 100.0).unwrap(), 300, 0).unwrap();
    let pts = assembly::sample_collocation(&p, 400, &[84], 0).unwrap();
    let model = Model::zeros(fs);
    c.bench_function("residual_jacobian N=300 M=484", |b| {
        b.iter(|| assembly::residual_jacobian(black_box(&model), &p, &pts).unwrap())
    });
}

fn linear_solve(c: &mut Criterion) {
    let p = builtin_advection_diffusion();
    let fs = sample_features(&FeatureDistribution::gaussian(2, 1.0).unwrap(), 100, 0).unwrap();
    let pts = assembly::sample_collocation(&p, 1000, &[100, 200], 0).unwrap();
    let sys = assembly::assemble_linear_system(&p, &fs, &pts).unwrap();
    c.bench_function("least squares 1300x100", |b| {
        b.iter(|| solve_least_squares(black_box(sys.matrix.as_ref()), &sys.rhs).unwrap())
    });
}

fn gauss_newton(c: &mut Criterion) {
    let p = builtin_nonlinear_elliptic();
    let fs = sample_features(&FeatureDistribution::gaussian(2, 100.0).unwrap(), 200, 0).unwrap();
    let pts = assembly::sample_collocation(&p, 400, &[84], 0).unwrap();
    let cfg = SolverConfig::with_method(SolverMethod::GaussNewton);
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    g.bench_function("gauss-newton N=200 M=484", |b| {
        b.iter(|| solvers::solve_gauss_newton(&p, black_box(&fs), &pts, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, features, jacobian, linear_solve, gauss_newton);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use erprior::estimation::{em_npmle, objective_and_gradient, solve_mple};
use erprior::information::expected_information;
use erprior::selection::loo_cross_validate;
use erprior::{GridDensity, SolverConfig};
use erprior_bench::problem;

fn objective(c: &mut Criterion) {
    let p = problem(0);
    let start = GridDensity::uniform(p.grid.clone());
    c.bench_function("objective_and_gradient", |b| {
        b.iter(|| {
            objective_and_gradient(&p.model, &p.data, black_box(&start), &p.penalty, 1.0).unwrap()
        })
    });
    c.bench_function("expected_information", |b| {
        b.iter(|| expected_information(&p.model, black_box(&start)))
    });
}

fn solvers(c: &mut Criterion) {
    let p = problem(0);
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("solve");
    for gamma in [0.1, 1.0, 10.0] {
        group.bench_function(format!("missing_info_gamma_{gamma}"), |b| {
            b.iter(|| {
                solve_mple(
                    &p.model,
                    &p.data,
                    p.grid.clone(),
                    &p.penalty,
                    black_box(gamma),
                    &cfg,
                )
                .unwrap()
            })
        });
    }
    group.bench_function("em_npmle", |b| {
        b.iter(|| em_npmle(&p.model, black_box(&p.data), p.grid.clone(), &cfg).unwrap())
    });
    group.finish();
}

fn crossval(c: &mut Criterion) {
    let p = problem(0);
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("crossval");
    group.sample_size(10);
    group.bench_function("loo_three_gammas", |b| {
        b.iter(|| {
            loo_cross_validate(
                &p.model,
                &p.data,
                p.grid.clone(),
                &p.penalty,
                &[0.1, 1.0, 10.0],
                &cfg,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, objective, solvers, crossval);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kmon_bench::gaussian_sample;
use kmon_core::limits::{simulate, LimitKind, LimitSimConfig, Span};
use kmon_core::{estimate_spectrum, KernelSpec, WindowParams};

fn limit_draws(c: &mut Criterion) {
    let training = gaussian_sample(200, 5, 5);
    let kernel = KernelSpec::euclidean().resolve(None).unwrap();
    let lambdas = estimate_spectrum(&kernel, &training).unwrap().lambdas;
    let mut group = c.benchmark_group("limit_100_reps");
    group.sample_size(10);
    for (kind, grid) in [
        (LimitKind::Gamma, 1024),
        (LimitKind::GammaWindow, 1024),
        (LimitKind::GammaBar, 256),
        (LimitKind::Bridge, 1024),
    ] {
        let cfg = LimitSimConfig {
            lambdas: lambdas.clone(),
            beta: 0.0,
            span: Span::Monitoring { m: 200, horizon: 2000 },
            grid_n: grid,
            reps: 100,
            seed: 1,
            window: Some(WindowParams::default()),
            zeta: Some(0.0),
        };
        group.bench_with_input(BenchmarkId::new(format!("{kind:?}"), grid), &cfg, |b, cfg| {
            b.iter(|| simulate(kind, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, limit_draws);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kmon_bench::gaussian_sample;
use kmon_core::{DetectorState, KernelSpec, WindowParams};

fn updates(c: &mut Criterion) {
    let training = gaussian_sample(200, 5, 1);
    let stream = gaussian_sample(1000, 5, 2);
    let mut group = c.benchmark_group("monitor_1000_steps");
    group.sample_size(10);
    for spec in [KernelSpec::sqrt_l1(), KernelSpec::euclidean(), KernelSpec::gaussian_median()] {
        let kernel = spec.resolve(Some(&training)).unwrap();
        group.bench_with_input(BenchmarkId::new("d1_d2_d3", spec.label()), &kernel, |b, kernel| {
            b.iter(|| {
                let mut state = DetectorState::new(kernel, &training).unwrap();
                let w = WindowParams::default();
                let mut acc = 0.0;
                for obs in &stream {
                    state.update(obs).unwrap();
                    if state.k() >= 2 {
                        acc += state.d1().unwrap() + state.d2().unwrap() + state.d3(&w).unwrap();
                    }
                }
                acc
            })
        });
    }
    group.finish();
}

fn spectrum(c: &mut Criterion) {
    let training = gaussian_sample(200, 5, 3);
    let kernel = KernelSpec::euclidean().resolve(None).unwrap();
    c.bench_function("spectrum_m200", |b| {
        b.iter(|| kmon_core::estimate_spectrum(&kernel, &training).unwrap())
    });
}

fn retro(c: &mut Criterion) {
    let sample = gaussian_sample(400, 5, 4);
    c.bench_function("retro_statistic_m400", |b| {
        b.iter(|| kmon_core::retro_statistic(&KernelSpec::sqrt_l1(), &sample, 0.0).unwrap())
    });
}

criterion_group!(benches, updates, spectrum, retro);
criterion_main!(benches);
